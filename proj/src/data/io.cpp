#include "latentgs/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <unistd.h>

#include "latentgs/errors.hpp"

namespace latentgs {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "payload I/O assumes a little-endian host");

void write_atomically(const fs::path& path, const std::function<void(std::ostream&)>& writer) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + tmp.string() + " for writing");
    writer(out);
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw FormatError("failed while writing " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

void write_header_payload(const fs::path& path, const nlohmann::json& header,
                          std::span<const double> payload) {
  write_atomically(path, [&](std::ostream& out) {
    out << header.dump() << '\n';
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size_bytes()));
  });
}

HeaderPayload read_header_payload(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("file not found: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("missing header line in " + path.string());
  HeaderPayload out;
  try {
    out.header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed header in " + path.string() + ": " + e.what());
  }
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % sizeof(double) != 0) {
    throw FormatError("payload of " + path.string() + " is not a whole number of float64");
  }
  out.payload.resize(bytes.size() / sizeof(double));
  std::memcpy(out.payload.data(), bytes.data(), bytes.size());
  return out;
}

void write_json(const fs::path& path, const nlohmann::json& value) {
  write_atomically(path, [&](std::ostream& out) { out << value.dump(2) << '\n'; });
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("file not found: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace latentgs
