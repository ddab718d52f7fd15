#include "optdialog/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include <openssl/evp.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "optdialog/error.hpp"

namespace optdialog {

namespace {

std::string media_type_for(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == ".png") return "image/png";
  if (ext == ".webp") return "image/webp";
  if (ext == ".bmp") return "image/bmp";
  return "image/jpeg";
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read image " + path.string(), path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

ImageAttachment ImageAttachment::from_file(std::string image_id, const std::filesystem::path& path) {
  return {std::move(image_id), Kind::File, path.string(), media_type_for(path), {}};
}

ImageAttachment ImageAttachment::from_uri(std::string image_id, std::string uri) {
  return {std::move(image_id), Kind::Uri, std::move(uri), {}, {}};
}

ImageAttachment ImageAttachment::inline_data(std::string image_id, std::string media_type, std::string base64_payload) {
  return {std::move(image_id), Kind::Inline, {}, std::move(media_type), std::move(base64_payload)};
}

std::string ImageAttachment::descriptor() const {
  switch (kind) {
    case Kind::File: return "file:" + location;
    case Kind::Uri: return "uri:" + location;
    case Kind::Inline: return "inline:" + media_type + ":" + std::to_string(base64_payload.size());
  }
  return {};
}

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int written = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                      reinterpret_cast<const unsigned char*>(bytes.data()),
                                      static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(written));
  return out;
}

std::string to_data_uri(const ImageAttachment& image, const ResizePolicy& policy) {
  switch (image.kind) {
    case ImageAttachment::Kind::Uri:
      return image.location;
    case ImageAttachment::Kind::Inline:
      return "data:" + image.media_type + ";base64," + image.base64_payload;
    case ImageAttachment::Kind::File:
      break;
  }

  const std::string media = image.media_type.empty() ? media_type_for(image.location) : image.media_type;
  const std::string raw = read_file(image.location);
  if (policy.longest_side <= 0) return "data:" + media + ";base64," + base64_encode(raw);

  const std::vector<unsigned char> encoded(raw.begin(), raw.end());
  cv::Mat pixels = cv::imdecode(encoded, cv::IMREAD_COLOR);
  if (pixels.empty()) throw Error(ErrorCode::Io, "cannot decode image " + image.location, image.location);

  const int longest = std::max(pixels.cols, pixels.rows);
  if (longest != policy.longest_side) {
    const double scale = static_cast<double>(policy.longest_side) / longest;
    const int w = std::max(1, static_cast<int>(std::lround(pixels.cols * scale)));
    const int h = std::max(1, static_cast<int>(std::lround(pixels.rows * scale)));
    cv::Mat resized;
    cv::resize(pixels, resized, cv::Size(w, h), 0, 0, scale < 1.0 ? cv::INTER_AREA : cv::INTER_LINEAR);
    pixels = resized;
  }

  const bool png = media == "image/png";
  std::vector<unsigned char> out;
  if (!cv::imencode(png ? ".png" : ".jpg", pixels, out)) {
    throw Error(ErrorCode::Io, "cannot encode image " + image.location, image.location);
  }
  return std::string("data:") + (png ? "image/png" : "image/jpeg") + ";base64," +
         base64_encode(std::string_view(reinterpret_cast<const char*>(out.data()), out.size()));
}

}  // namespace optdialog
