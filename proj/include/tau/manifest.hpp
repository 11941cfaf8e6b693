#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace tau {

// Every CLI command emits one of these next to its artifacts. All
// artifacts are digest-listed; wall-clock duration lives only here so
// artifact files stay byte-reproducible.
struct RunManifest {
    std::string command;
    std::string toolkit_version;
    std::string config_digest;
    std::map<std::string, std::string> input_digests;   // name -> sha256
    std::map<std::string, std::string> output_digests;  // file -> sha256
    std::uint64_t seed = 0;
    double duration_ms = 0.0;

    std::string to_json() const;
};

void write_manifest(const RunManifest& m, const std::string& path);

// Exclusive lock on an output directory; throws when another writer
// holds it.
class DirLock {
  public:
    explicit DirLock(const std::string& dir);
    ~DirLock();
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

  private:
    std::string path_;
};

}  // namespace tau
