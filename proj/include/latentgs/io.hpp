#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace latentgs {

/// Writes through a sibling temporary file and renames it into place, so
/// readers never observe a partially written file.
void write_atomically(const std::filesystem::path& path,
                      const std::function<void(std::ostream&)>& writer);

/// Container used for datasets and checkpoints: one line of JSON, a newline,
/// then a raw little-endian float64 payload.
void write_header_payload(const std::filesystem::path& path, const nlohmann::json& header,
                          std::span<const double> payload);

struct HeaderPayload {
  nlohmann::json header;
  std::vector<double> payload;
};

HeaderPayload read_header_payload(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& value);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace latentgs
