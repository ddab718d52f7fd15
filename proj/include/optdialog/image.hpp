#pragma once

#include <filesystem>
#include <string>

namespace optdialog {

// The single image that accompanies every chat request. Pixels are only read
// when a wire backend serializes the request.
struct ImageAttachment {
  enum class Kind { File, Uri, Inline };

  std::string image_id;
  Kind kind = Kind::File;
  std::string location;       // file path or URI; empty for Inline
  std::string media_type;     // e.g. "image/jpeg"; inferred for files when empty
  std::string base64_payload; // Inline only

  static ImageAttachment from_file(std::string image_id, const std::filesystem::path& path);
  static ImageAttachment from_uri(std::string image_id, std::string uri);
  static ImageAttachment inline_data(std::string image_id, std::string media_type, std::string base64_payload);

  // Stable textual identity used in prompt digests and transcripts.
  std::string descriptor() const;
};

struct ResizePolicy {
  int longest_side = 640;  // 0 disables resizing
};

// Produces the data URI (or passthrough URI) sent over the wire. File images
// are decoded, scaled so the longest side equals `policy.longest_side` with
// aspect preserved, and re-encoded (PNG sources stay PNG, everything else JPEG).
std::string to_data_uri(const ImageAttachment& image, const ResizePolicy& policy);

std::string base64_encode(std::string_view bytes);

}  // namespace optdialog
