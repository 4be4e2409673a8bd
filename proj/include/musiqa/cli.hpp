#pragma once

// Command-line entry point. Exit codes: 0 success, 2 usage, 3 data, 4 tool.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace musiqa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitTool = 4;

struct RunManifest {
    std::string command;
    std::vector<std::string> arguments;
    std::string config;  // key=value snapshot
    std::uint64_t seed = 0;
    std::string corpus_hash;
    std::map<std::string, std::string> tool_versions;
    std::map<std::string, std::string> output_hashes;  // file name -> fnv1a64 hex

    std::string to_json() const;
};

// FNV-1a of the file's bytes, as 16 hex digits.
std::string file_hash(const std::string& path);

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace musiqa::cli
