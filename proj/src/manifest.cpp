#include "oodreg/manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <ctime>
#include <fstream>
#include <memory>

#include "json.hpp"
#include "oodreg/errors.hpp"

namespace oodreg {
namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw std::runtime_error("sha256: digest init failed");
    }
  }
  void update(const char* data, std::size_t n) { EVP_DigestUpdate(ctx_.get(), data, n); }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), digest.data(), &len);
    static const char* kHex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out += kHex[digest[i] >> 4];
      out += kHex[digest[i] & 0xf];
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

std::string iso8601(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot hash " + path.string());
  Sha256 h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

void write_manifest(const RunManifest& m, const std::filesystem::path& out_dir) {
  using nlohmann::json;
  json doc;
  doc["tool_version"] = kToolVersion;
  doc["command"] = m.command;
  doc["started"] = iso8601(m.started);
  doc["finished"] = iso8601(m.finished);
  doc["seeds"] = {{"data", m.data_seed},
                  {"init", m.seeds.init},
                  {"shuffle", m.seeds.shuffle},
                  {"dropout", m.seeds.dropout},
                  {"mc", m.seeds.mc}};
  doc["config"] = m.config_json.empty() ? json(nullptr) : json::parse(m.config_json);
  json files = json::array();
  for (const auto& rel : m.files) {
    const auto full = out_dir / rel;
    files.push_back({{"path", rel.generic_string()},
                     {"bytes", std::filesystem::file_size(full)},
                     {"sha256", sha256_file(full)}});
  }
  doc["files"] = std::move(files);
  std::ofstream out(out_dir / "manifest.json", std::ios::binary);
  if (!out) throw DataError("cannot write manifest in " + out_dir.string());
  out << doc.dump(2) << "\n";
}

}  // namespace oodreg
