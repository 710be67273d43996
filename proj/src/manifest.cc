// src/manifest.cc

#include "rnnt/manifest.h"

#include <openssl/evp.h>

#include <algorithm>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>

#include "rnnt/error.h"

namespace rnnt {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw Error("sha256: digest initialization failed");
    }
  }
  void Update(const char *data, size_t n) {
    if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw Error("sha256: update failed");
  }
  std::string Hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), md, &len) != 1) throw Error("sha256: final failed");
    static const char *kHex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out += kHex[md[i] >> 4];
      out += kHex[md[i] & 15];
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, void (*)(EVP_MD_CTX *)> ctx_;
};

json DigestsJson(const std::vector<FileDigest> &files) {
  json out = json::array();
  for (const FileDigest &f : files) {
    out.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  }
  return out;
}

std::vector<FileDigest> DigestsFrom(const json &j) {
  std::vector<FileDigest> out;
  for (const json &e : j) {
    out.push_back({e.at("path").get<std::string>(), e.at("sha256").get<std::string>(),
                   e.at("bytes").get<uintmax_t>()});
  }
  return out;
}

}  // namespace

std::string Sha256File(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "' for hashing");
  Sha256 h;
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof(buf));
    h.Update(buf, static_cast<size_t>(is.gcount()));
  }
  return h.Hex();
}

std::string Sha256Hex(const std::string &bytes) {
  Sha256 h;
  h.Update(bytes.data(), bytes.size());
  return h.Hex();
}

std::vector<FileDigest> DigestPaths(const std::vector<std::string> &paths) {
  std::vector<std::string> files;
  for (const std::string &p : paths) {
    if (fs::is_directory(p)) {
      std::vector<std::string> below;
      for (const auto &e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file()) below.push_back(e.path().string());
      }
      std::sort(below.begin(), below.end());
      files.insert(files.end(), below.begin(), below.end());
    } else {
      files.push_back(p);
    }
  }
  std::vector<FileDigest> out;
  for (const std::string &f : files) {
    if (!fs::is_regular_file(f)) throw IoError("missing file '" + f + "'");
    out.push_back({f, Sha256File(f), fs::file_size(f)});
  }
  return out;
}

json RunManifest::ToJson() const {
  return {{"command", command},
          {"arguments", arguments},
          {"seeds", seeds},
          {"inputs", DigestsJson(inputs)},
          {"outputs", DigestsJson(outputs)},
          {"wall_clock_seconds", wall_clock_seconds},
          {"started_at", started_at},
          {"key", key},
          {"report", report}};
}

RunManifest RunManifest::FromJson(const json &j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.arguments = j.at("arguments");
  m.seeds = j.at("seeds");
  m.inputs = DigestsFrom(j.at("inputs"));
  m.outputs = DigestsFrom(j.at("outputs"));
  m.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
  m.started_at = j.at("started_at").get<std::string>();
  m.key = j.at("key").get<std::string>();
  m.report = j.value("report", json::object());
  return m;
}

std::string ManifestKey(const std::string &command, const json &arguments,
                        const json &seeds, const std::vector<FileDigest> &inputs) {
  json inputs_by_digest = json::array();
  for (const FileDigest &f : inputs) inputs_by_digest.push_back(f.sha256);
  const json k = {{"command", command},
                  {"arguments", arguments},
                  {"seeds", seeds},
                  {"inputs", inputs_by_digest}};
  return Sha256Hex(k.dump());
}

std::string ManifestPath(const std::string &output) {
  std::string p = output;
  while (p.size() > 1 && p.back() == '/') p.pop_back();
  return p + ".manifest.json";
}

std::optional<RunManifest> ReadManifest(const std::string &path) {
  std::ifstream is(path);
  if (!is) return std::nullopt;
  try {
    return RunManifest::FromJson(json::parse(is));
  } catch (const json::exception &) {
    return std::nullopt;
  }
}

void WriteManifest(const std::string &path, const RunManifest &manifest) {
  const fs::path parent = fs::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) fs::create_directories(parent, ec);
  std::ofstream os(path);
  if (!os) throw IoError("cannot write manifest '" + path + "'");
  os << manifest.ToJson().dump(2) << '\n';
  if (!os) throw IoError("write to '" + path + "' failed");
}

bool UpToDate(const std::string &path, const std::string &key) {
  const auto m = ReadManifest(path);
  if (!m || m->key != key || m->outputs.empty()) return false;
  for (const FileDigest &f : m->outputs) {
    if (!fs::is_regular_file(f.path) || Sha256File(f.path) != f.sha256) return false;
  }
  return true;
}

std::string UtcTimestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace rnnt
