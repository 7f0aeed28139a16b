#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "pqnet/cli/config.hpp"
#include "pqnet/version.hpp"

namespace pqnet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitDependency = 3;
inline constexpr int kExitInternal = 4;

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Writes through a temporary file so readers never see a partial file.
inline void write_atomic(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

/// Exclusive lock on a run directory, held for the lifetime of the object.
class RunLock {
 public:
  explicit RunLock(const fs::path& run_dir) : path_(run_dir / ".pqnet.lock") {
    fs::create_directories(run_dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) throw InvalidInput("run directory " + run_dir.string() + " is in use by another command (" + path_.string() + ")");
    std::fprintf(f, "%ld\n", static_cast<long>(::getpid()));
    std::fclose(f);
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

/// What a command did: inputs, outputs and summary numbers.
struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;
  std::string started, finished;
  std::vector<fs::path> artifacts;
  nlohmann::json metrics = nlohmann::json::object();

  nlohmann::json to_json() const {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : artifacts) a.push_back(p.string());
    return {{"command", command}, {"code_version", kVersion}, {"config", config}, {"started", started},
            {"finished", finished}, {"artifacts", a}, {"metrics", metrics}};
  }
};

/// Shared state of one command invocation.
struct Context {
  RunConfig cfg;
  bool force = false;
  std::ostream* out = nullptr;
  RunManifest manifest;

  fs::path checkpoint(const std::string& name) const { return cfg.run_dir / "checkpoints" / name; }
  fs::path log_path(const std::string& stage) const { return cfg.run_dir / "logs" / (stage + "_loss.csv"); }
  void produced(const fs::path& p) { manifest.artifacts.push_back(p); }

  void finish(const std::string& manifest_name) {
    manifest.finished = utc_timestamp();
    const fs::path path = cfg.run_dir / "manifests" / (manifest_name + ".json");
    write_atomic(path, manifest.to_json().dump(2) + "\n");
  }
};

}  // namespace pqnet::cli
