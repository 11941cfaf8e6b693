#include "tau/manifest.hpp"

#include <nlohmann/json.hpp>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <filesystem>

#include "tau/errors.hpp"
#include "tau/text.hpp"

namespace tau {

using ordered_json = nlohmann::ordered_json;

std::string RunManifest::to_json() const {
    ordered_json j;
    j["format_version"] = 1;
    j["command"] = command;
    j["toolkit_version"] = toolkit_version;
    j["config_digest"] = config_digest;
    j["input_digests"] = input_digests;
    j["output_digests"] = output_digests;
    j["seed"] = seed;
    j["duration_ms"] = duration_ms;
    return j.dump(2) + "\n";
}

void write_manifest(const RunManifest& m, const std::string& path) {
    write_file(path, m.to_json());
}

DirLock::DirLock(const std::string& dir) {
    std::filesystem::create_directories(dir);
    path_ = dir + "/.lock";
    FILE* f = std::fopen(path_.c_str(), "wx");
    if (f == nullptr) {
        if (errno == EEXIST) {
            throw_io("output directory is locked by another run: " + dir);
        }
        throw_io("failed to create lock file in " + dir + ": " + std::strerror(errno));
    }
    std::fclose(f);
}

DirLock::~DirLock() { std::remove(path_.c_str()); }

}  // namespace tau
