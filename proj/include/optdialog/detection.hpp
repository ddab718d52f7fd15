#pragma once

// Detector post-processing: pixel-space detections are normalized into
// center-format boxes, score-filtered, and reduced with greedy NMS into the
// set of perception tokens that gets serialized into agent prompts.

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace optdialog {

enum class BoxFormat { CenterWH, CornerXYXY };

std::string_view to_string(BoxFormat format);

struct ImageSize {
  double width = 0.0;
  double height = 0.0;

  bool operator==(const ImageSize&) const = default;
};

// Detector input resolution used when a record carries no frame size.
inline constexpr ImageSize kDefaultDetectorFrame{640.0, 640.0};

// A detection in pixel units as written by the detector.
struct RawDetection {
  std::array<double, 4> box{};
  BoxFormat format = BoxFormat::CenterWH;
  double score = 0.0;
  std::optional<std::string> class_hint;
  std::optional<ImageSize> frame;

  bool operator==(const RawDetection&) const = default;
};

// Center-format box with all fields normalized to [0,1].
struct BoundingBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  bool operator==(const BoundingBox&) const = default;
};

struct ScoredBox {
  BoundingBox box;
  double score = 0.0;
  std::optional<std::string> class_hint;

  bool operator==(const ScoredBox&) const = default;
};

struct NmsConfig {
  double score_threshold = 0.5;
  double iou_threshold = 0.5;
  int max_detections = 20;
};

// Throws ConfigError listing every out-of-range field.
void validate(const NmsConfig& cfg);

// Post-NMS boxes for one image, in descending score order.
struct PerceptionTokenSet {
  std::string image_id;
  std::string detector_id;
  std::vector<ScoredBox> boxes;

  bool empty() const { return boxes.empty(); }
  std::size_t size() const { return boxes.size(); }
};

double iou(const BoundingBox& a, const BoundingBox& b);

// Greedy class-agnostic NMS. Drops scores below the threshold, stable-sorts by
// descending score, suppresses boxes with IoU above the IoU threshold against
// any kept box, and stops at max_detections.
PerceptionTokenSet nms(std::span<const ScoredBox> detections, const NmsConfig& cfg,
                       std::string image_id = {}, std::string detector_id = {});

BoundingBox normalize_box(const RawDetection& raw, double image_w, double image_h);
ScoredBox normalize_detection(const RawDetection& raw, const ImageSize& fallback_frame = kDefaultDetectorFrame);

// Inverse of normalize_box for in-frame boxes: center-format pixel detection.
RawDetection denormalize_box(const BoundingBox& box, double image_w, double image_h, double score = 1.0);

// Normalizes every detection of an image and runs NMS. Boxes that fall
// entirely outside the frame are dropped.
PerceptionTokenSet prepare_tokens(std::string_view image_id, std::span<const RawDetection> detections,
                                  const NmsConfig& cfg, std::string detector_id = "file",
                                  const ImageSize& fallback_frame = kDefaultDetectorFrame);

class DetectionIndex {
 public:
  using Map = std::map<std::string, std::vector<RawDetection>, std::less<>>;

  DetectionIndex() = default;
  explicit DetectionIndex(Map by_image) : by_image_(std::move(by_image)) {}

  // Images without records yield an empty list.
  std::span<const RawDetection> lookup(std::string_view image_id) const;

  std::size_t image_count() const { return by_image_.size(); }
  std::size_t detection_count() const;
  const Map& images() const { return by_image_; }

 private:
  Map by_image_;
};

struct DetectionRecord {
  std::string image_id;
  RawDetection detection;
};

// Parses one JSON-lines record. `line_no` is used for error reporting only.
DetectionRecord parse_detection_record(std::string_view line, std::size_t line_no);

DetectionIndex parse_detections(std::string_view text);
DetectionIndex load_detections(const std::filesystem::path& path);

}  // namespace optdialog
