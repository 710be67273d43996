// include/rnnt/manifest.h
//
// Provenance records written beside every command's outputs. The key hashes
// the command, its resolved arguments and the digests of its inputs; a rerun
// whose key matches an existing manifest with intact outputs is skipped.

#ifndef RNNT_MANIFEST_H_
#define RNNT_MANIFEST_H_

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace rnnt {

// Lowercase hex SHA-256 of a file's bytes; IoError when unreadable.
std::string Sha256File(const std::string &path);
std::string Sha256Hex(const std::string &bytes);

struct FileDigest {
  std::string path;
  std::string sha256;
  uintmax_t bytes = 0;
};
// A directory expands to every regular file below it, sorted by path.
std::vector<FileDigest> DigestPaths(const std::vector<std::string> &paths);

struct RunManifest {
  std::string command;
  nlohmann::json arguments;  // resolved flags and config
  nlohmann::json seeds;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  double wall_clock_seconds = 0.0;
  std::string started_at;  // UTC, ISO 8601
  std::string key;
  nlohmann::json report = nlohmann::json::object();  // command-specific results

  nlohmann::json ToJson() const;
  static RunManifest FromJson(const nlohmann::json &j);
};

// Hash of command, arguments, seeds and input digests.
std::string ManifestKey(const std::string &command,
                        const nlohmann::json &arguments,
                        const nlohmann::json &seeds,
                        const std::vector<FileDigest> &inputs);

// "<output>.manifest.json".
std::string ManifestPath(const std::string &output);

std::optional<RunManifest> ReadManifest(const std::string &path);
// IoError when the directory is not writable.
void WriteManifest(const std::string &path, const RunManifest &manifest);

// True when `path` holds a manifest with `key` whose outputs all still
// exist with their recorded digests.
bool UpToDate(const std::string &path, const std::string &key);

std::string UtcTimestamp();

}  // namespace rnnt

#endif  // RNNT_MANIFEST_H_
