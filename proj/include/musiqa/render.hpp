#pragma once

// Visual modality: ABC snippets rendered to PNG through an external
// engraver (abcm2ps) and raster converter (ImageMagick).

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "musiqa/error.hpp"
#include "musiqa/qgen.hpp"

namespace musiqa::render {

struct RenderJob {
    std::string abc_text;
    std::filesystem::path output_path;
    int dpi = 150;
    bool trim = true;
};

class RenderError : public Error {
public:
    using Error::Error;
};

class ToolMissing : public RenderError {
public:
    using RenderError::RenderError;
};

class ToolFailed : public RenderError {
public:
    ToolFailed(const std::string& tool, int status, const std::string& stderr_excerpt);
    const std::string& stderr_excerpt() const { return stderr_; }
    int status() const { return status_; }

private:
    int status_;
    std::string stderr_;
};

class Timeout : public RenderError {
public:
    using RenderError::RenderError;
};

class Renderer {
public:
    virtual ~Renderer() = default;
    // Writes job.output_path, replacing any existing file.
    virtual void render(const RenderJob& job) = 0;
    // Identifies the tools for run manifests.
    virtual std::map<std::string, std::string> versions() { return {}; }
};

inline constexpr int kMinDpi = 72;
inline constexpr int kMaxDpi = 600;

struct ToolchainConfig {
    std::string engraver = "abcm2ps";
    std::string converter = "convert";
    int dpi = 150;
    std::chrono::milliseconds timeout{60000};

    // MUSIQA_ENGRAVER, MUSIQA_CONVERTER, MUSIQA_DPI, MUSIQA_RENDER_TIMEOUT
    // (seconds) override the defaults. Throws RenderError on a bad value.
    static ToolchainConfig from_env();
};

// Resolves a bare name against PATH; paths with a slash must be executable.
std::optional<std::filesystem::path> find_executable(const std::string& name);

struct ProcessResult {
    int exit_code = 0;  // 128 + signal when killed by a signal
    std::string out;
    std::string err;
};

// fork/exec with captured output and a wall-clock limit. The child runs in
// its own process group in `cwd`; on timeout the whole group is killed and
// Timeout is thrown. Throws ToolMissing when exec fails.
ProcessResult run_process(const std::vector<std::string>& argv, const std::filesystem::path& cwd,
                          std::chrono::milliseconds timeout);

// The text handed to the engraver: X:1 first, no title, page margins
// collapsed so only the staff remains.
std::string engraver_input(const std::string& abc_text);

class ToolchainRenderer : public Renderer {
public:
    explicit ToolchainRenderer(ToolchainConfig cfg = ToolchainConfig::from_env());
    void render(const RenderJob& job) override;
    std::map<std::string, std::string> versions() override;
    const ToolchainConfig& config() const { return cfg_; }

    // True when both tools resolve.
    bool available() const;

private:
    ToolchainConfig cfg_;
    std::optional<std::map<std::string, std::string>> versions_;
};

// Convenience wrapper around a default-configured ToolchainRenderer.
void render_snippet(const RenderJob& job);

struct VisualRecord {
    qgen::QARecord base;
    std::optional<std::string> context_image;
    std::vector<std::string> choice_images;  // empty or 4, presented order A..D
};

struct RenderFailure {
    std::string record_id;
    std::string error;
};

struct VisualSet {
    std::vector<VisualRecord> records;  // successful records, input order
    std::vector<RenderFailure> failures;
};

struct VisualOptions {
    int dpi = 150;
    int jobs = 0;  // 0: hardware concurrency
};

// Renders every record's context and score-valued options under
// out_dir/image/, writes out_dir/manifest.json and returns the records that
// rendered completely. A record with any failed image is listed in failures
// and the batch continues.
VisualSet build_visual_set(const std::vector<qgen::QARecord>& records, const std::filesystem::path& out_dir,
                           Renderer& renderer, const VisualOptions& opt = {});

// Deterministic manifest text: dpi, tool versions, record id -> image paths,
// failures.
std::string manifest_json(const VisualSet& set, int dpi, const std::map<std::string, std::string>& versions);

}  // namespace musiqa::render
