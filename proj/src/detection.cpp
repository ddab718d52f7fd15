#include "optdialog/detection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "optdialog/error.hpp"

namespace optdialog {

std::string_view to_string(BoxFormat format) {
  return format == BoxFormat::CenterWH ? "center_wh" : "corner_xyxy";
}

void validate(const NmsConfig& cfg) {
  std::vector<FieldIssue> issues;
  if (!(cfg.score_threshold >= 0.0 && cfg.score_threshold <= 1.0))
    issues.push_back({"nms.score_threshold", "must lie in [0,1]"});
  if (!(cfg.iou_threshold >= 0.0 && cfg.iou_threshold <= 1.0))
    issues.push_back({"nms.iou_threshold", "must lie in [0,1]"});
  if (cfg.max_detections < 1) issues.push_back({"nms.max_detections", "must be >= 1"});
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  // Areas come from the same corner arithmetic as the overlap so that
  // iou(a, a) is exactly 1.
  const double ax1 = a.cx - a.w / 2, ax2 = a.cx + a.w / 2, ay1 = a.cy - a.h / 2, ay2 = a.cy + a.h / 2;
  const double bx1 = b.cx - b.w / 2, bx2 = b.cx + b.w / 2, by1 = b.cy - b.h / 2, by2 = b.cy + b.h / 2;
  const double ix = std::min(ax2, bx2) - std::max(ax1, bx1);
  const double iy = std::min(ay2, by2) - std::max(ay1, by1);
  const double inter = std::max(ix, 0.0) * std::max(iy, 0.0);
  const double uni = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

PerceptionTokenSet nms(std::span<const ScoredBox> detections, const NmsConfig& cfg, std::string image_id,
                       std::string detector_id) {
  validate(cfg);
  PerceptionTokenSet out{std::move(image_id), std::move(detector_id), {}};

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (detections[i].score >= cfg.score_threshold) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t lhs, std::size_t rhs) {
    return detections[lhs].score > detections[rhs].score;
  });

  const auto limit = static_cast<std::size_t>(cfg.max_detections);
  for (std::size_t idx : order) {
    if (out.boxes.size() >= limit) break;
    const auto& candidate = detections[idx];
    const bool suppressed = std::any_of(out.boxes.begin(), out.boxes.end(), [&](const ScoredBox& kept) {
      return iou(kept.box, candidate.box) > cfg.iou_threshold;
    });
    if (!suppressed) out.boxes.push_back(candidate);
  }
  return out;
}

BoundingBox normalize_box(const RawDetection& raw, double image_w, double image_h) {
  if (!(image_w > 0.0) || !(image_h > 0.0)) {
    throw Error(ErrorCode::NonPositiveDimension, "image dimensions must be positive");
  }
  double cx = raw.box[0];
  double cy = raw.box[1];
  double w = raw.box[2];
  double h = raw.box[3];
  if (raw.format == BoxFormat::CornerXYXY) {
    w = raw.box[2] - raw.box[0];
    h = raw.box[3] - raw.box[1];
    cx = raw.box[0] + w / 2;
    cy = raw.box[1] + h / 2;
  }
  if (!(w > 0.0) || !(h > 0.0)) {
    throw Error(ErrorCode::NonPositiveDimension, "box width and height must be positive");
  }

  const double x1 = std::clamp((cx - w / 2) / image_w, 0.0, 1.0);
  const double x2 = std::clamp((cx + w / 2) / image_w, 0.0, 1.0);
  const double y1 = std::clamp((cy - h / 2) / image_h, 0.0, 1.0);
  const double y2 = std::clamp((cy + h / 2) / image_h, 0.0, 1.0);
  if (!(x2 > x1) || !(y2 > y1)) {
    throw Error(ErrorCode::NonPositiveDimension, "box lies outside the image");
  }
  return {(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1};
}

ScoredBox normalize_detection(const RawDetection& raw, const ImageSize& fallback_frame) {
  const ImageSize frame = raw.frame.value_or(fallback_frame);
  return {normalize_box(raw, frame.width, frame.height), raw.score, raw.class_hint};
}

RawDetection denormalize_box(const BoundingBox& box, double image_w, double image_h, double score) {
  RawDetection raw;
  raw.box = {box.cx * image_w, box.cy * image_h, box.w * image_w, box.h * image_h};
  raw.format = BoxFormat::CenterWH;
  raw.score = score;
  raw.frame = ImageSize{image_w, image_h};
  return raw;
}

PerceptionTokenSet prepare_tokens(std::string_view image_id, std::span<const RawDetection> detections,
                                  const NmsConfig& cfg, std::string detector_id, const ImageSize& fallback_frame) {
  std::vector<ScoredBox> normalized;
  normalized.reserve(detections.size());
  for (const auto& raw : detections) {
    try {
      normalized.push_back(normalize_detection(raw, fallback_frame));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonPositiveDimension) throw;
    }
  }
  return nms(normalized, cfg, std::string(image_id), std::move(detector_id));
}

std::span<const RawDetection> DetectionIndex::lookup(std::string_view image_id) const {
  const auto it = by_image_.find(image_id);
  if (it == by_image_.end()) return {};
  return it->second;
}

std::size_t DetectionIndex::detection_count() const {
  return std::accumulate(by_image_.begin(), by_image_.end(), std::size_t{0},
                         [](std::size_t acc, const auto& kv) { return acc + kv.second.size(); });
}

namespace {

[[noreturn]] void malformed(std::size_t line_no, const std::string& what) {
  throw Error(ErrorCode::MalformedRecord, what, {}, line_no);
}

double finite_number(const nlohmann::json& value, std::size_t line_no, const char* field) {
  if (!value.is_number()) malformed(line_no, std::string("field '") + field + "' must be a number");
  const double v = value.get<double>();
  if (!std::isfinite(v)) malformed(line_no, std::string("field '") + field + "' must be finite");
  return v;
}

bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

DetectionRecord parse_detection_record(std::string_view line, std::size_t line_no) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    malformed(line_no, std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) malformed(line_no, "record must be a JSON object");

  DetectionRecord rec;
  const auto id = doc.find("image_id");
  if (id == doc.end() || !id->is_string() || id->get<std::string>().empty()) {
    malformed(line_no, "field 'image_id' must be a non-empty string");
  }
  rec.image_id = id->get<std::string>();

  const auto fmt = doc.find("format");
  if (fmt == doc.end() || !fmt->is_string()) malformed(line_no, "field 'format' must be a string");
  if (*fmt == "center_wh") {
    rec.detection.format = BoxFormat::CenterWH;
  } else if (*fmt == "corner_xyxy") {
    rec.detection.format = BoxFormat::CornerXYXY;
  } else {
    malformed(line_no, "field 'format' must be \"center_wh\" or \"corner_xyxy\"");
  }

  const auto box = doc.find("box");
  if (box == doc.end() || !box->is_array() || box->size() != 4) {
    malformed(line_no, "field 'box' must be an array of 4 numbers");
  }
  for (std::size_t i = 0; i < 4; ++i) rec.detection.box[i] = finite_number((*box)[i], line_no, "box");

  const auto score = doc.find("score");
  if (score == doc.end()) malformed(line_no, "missing field 'score'");
  rec.detection.score = finite_number(*score, line_no, "score");
  if (rec.detection.score < 0.0 || rec.detection.score > 1.0) malformed(line_no, "score must lie in [0,1]");

  if (const auto hint = doc.find("class_hint"); hint != doc.end() && !hint->is_null()) {
    if (!hint->is_string()) malformed(line_no, "field 'class_hint' must be a string");
    rec.detection.class_hint = hint->get<std::string>();
  }

  const auto iw = doc.find("image_w");
  const auto ih = doc.find("image_h");
  if ((iw == doc.end()) != (ih == doc.end())) malformed(line_no, "'image_w' and 'image_h' must appear together");
  if (iw != doc.end()) {
    ImageSize frame{finite_number(*iw, line_no, "image_w"), finite_number(*ih, line_no, "image_h")};
    if (frame.width <= 0.0 || frame.height <= 0.0) malformed(line_no, "image dimensions must be positive");
    rec.detection.frame = frame;
  }

  const auto& b = rec.detection.box;
  if (rec.detection.format == BoxFormat::CenterWH) {
    if (b[2] <= 0.0 || b[3] <= 0.0) malformed(line_no, "center_wh box needs positive width and height");
  } else if (!(b[0] < b[2]) || !(b[1] < b[3])) {
    malformed(line_no, "corner_xyxy box needs x1<x2 and y1<y2");
  }
  return rec;
}

DetectionIndex parse_detections(std::string_view text) {
  DetectionIndex::Map by_image;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (is_blank(line)) continue;

    auto rec = parse_detection_record(line, line_no);
    auto& bucket = by_image[rec.image_id];
    if (std::find(bucket.begin(), bucket.end(), rec.detection) != bucket.end()) {
      throw Error(ErrorCode::DuplicateImageEntry, "record repeats an earlier detection for '" + rec.image_id + "'",
                  rec.image_id, line_no);
    }
    bucket.push_back(std::move(rec.detection));
  }
  return DetectionIndex(std::move(by_image));
}

DetectionIndex load_detections(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open detections file " + path.string(), path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_detections(buf.str());
}

}  // namespace optdialog
