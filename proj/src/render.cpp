#include "musiqa/render.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "musiqa/dataset.hpp"

namespace musiqa::render {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kExcerptLimit = 2000;

std::string excerpt(const std::string& s) {
    std::string t = s;
    while (!t.empty() && (t.back() == '\n' || t.back() == ' ')) t.pop_back();
    if (t.size() > kExcerptLimit) t = t.substr(0, kExcerptLimit) + "...";
    return t;
}

std::optional<long> env_long(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    char* end = nullptr;
    errno = 0;
    const long x = std::strtol(v, &end, 10);
    if (errno != 0 || *end != '\0') throw RenderError(std::string(name) + " is not an integer: " + v);
    return x;
}

class TempDir {
public:
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "musiqa-render-XXXXXX").string();
        if (!::mkdtemp(tmpl.data())) throw RenderError("cannot create temp dir: " + std::string(std::strerror(errno)));
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

std::string first_line(const std::string& s) {
    const auto nl = s.find('\n');
    return excerpt(nl == std::string::npos ? s : s.substr(0, nl));
}

}  // namespace

ToolFailed::ToolFailed(const std::string& tool, int status, const std::string& stderr_excerpt)
    : RenderError(tool + " failed (status " + std::to_string(status) + "): " + stderr_excerpt),
      status_(status),
      stderr_(stderr_excerpt) {}

ToolchainConfig ToolchainConfig::from_env() {
    ToolchainConfig cfg;
    if (const char* e = std::getenv("MUSIQA_ENGRAVER"); e && *e) cfg.engraver = e;
    if (const char* c = std::getenv("MUSIQA_CONVERTER"); c && *c) cfg.converter = c;
    if (const auto dpi = env_long("MUSIQA_DPI")) {
        if (*dpi < kMinDpi || *dpi > kMaxDpi) throw RenderError("MUSIQA_DPI must be in [72, 600]");
        cfg.dpi = static_cast<int>(*dpi);
    }
    if (const auto t = env_long("MUSIQA_RENDER_TIMEOUT")) {
        if (*t <= 0) throw RenderError("MUSIQA_RENDER_TIMEOUT must be positive");
        cfg.timeout = std::chrono::seconds(*t);
    }
    return cfg;
}

std::optional<fs::path> find_executable(const std::string& name) {
    auto ok = [](const fs::path& p) { return fs::is_regular_file(p) && ::access(p.c_str(), X_OK) == 0; };
    if (name.empty()) return std::nullopt;
    if (name.find('/') != std::string::npos) {
        if (ok(name)) return fs::absolute(name);
        return std::nullopt;
    }
    const char* path = std::getenv("PATH");
    std::istringstream dirs(path ? path : "/usr/bin:/bin");
    std::string dir;
    while (std::getline(dirs, dir, ':')) {
        const fs::path p = fs::path(dir.empty() ? "." : dir) / name;
        if (ok(p)) return p;
    }
    return std::nullopt;
}

ProcessResult run_process(const std::vector<std::string>& argv, const fs::path& cwd, std::chrono::milliseconds timeout) {
    if (argv.empty()) throw RenderError("empty command");
    const auto exe = find_executable(argv[0]);
    if (!exe) throw ToolMissing("tool not found: " + argv[0]);

    int out_pipe[2];
    int err_pipe[2];
    int exec_pipe[2];
    // Close-on-exec everywhere so concurrent children never hold each
    // other's pipes open; dup2 clears the flag on the child's stdio.
    if (::pipe2(out_pipe, O_CLOEXEC) || ::pipe2(err_pipe, O_CLOEXEC) || ::pipe2(exec_pipe, O_CLOEXEC)) {
        throw RenderError("pipe failed");
    }

    std::vector<std::string> args = argv;
    std::vector<char*> cargv;
    for (auto& a : args) cargv.push_back(a.data());
    cargv.push_back(nullptr);
    const std::string exe_str = exe->string();
    const std::string cwd_str = cwd.string();

    const pid_t pid = ::fork();
    if (pid < 0) throw RenderError("fork failed");
    if (pid == 0) {
        ::setpgid(0, 0);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::dup2(err_pipe[1], STDERR_FILENO);
        ::close(out_pipe[0]);
        ::close(err_pipe[0]);
        ::close(exec_pipe[0]);
        const int devnull = ::open("/dev/null", O_RDONLY | O_CLOEXEC);
        if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
        int code = 0;
        if (!cwd_str.empty() && ::chdir(cwd_str.c_str()) != 0) {
            code = errno;
        } else {
            ::execv(exe_str.c_str(), cargv.data());
            code = errno;
        }
        [[maybe_unused]] auto n = ::write(exec_pipe[1], &code, sizeof code);
        ::_exit(127);
    }
    ::setpgid(pid, pid);
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    ::close(exec_pipe[1]);

    ProcessResult result;
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
    int open_fds = 2;
    bool timed_out = false;
    char buf[4096];
    while (open_fds > 0) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            timed_out = true;
            break;
        }
        const int r = ::poll(fds, 2, static_cast<int>(std::min<long long>(left.count(), 1000)));
        if (r < 0 && errno != EINTR) break;
        for (int i = 0; i < 2; ++i) {
            if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
            const ssize_t n = ::read(fds[i].fd, buf, sizeof buf);
            if (n > 0) {
                (i == 0 ? result.out : result.err).append(buf, static_cast<std::size_t>(n));
            } else {
                ::close(fds[i].fd);
                fds[i].fd = -1;
                --open_fds;
            }
        }
    }
    if (timed_out) ::kill(-pid, SIGKILL);
    for (auto& f : fds) {
        if (f.fd >= 0) ::close(f.fd);
    }

    int status = 0;
    // Output closed but the child may still be running.
    while (!timed_out) {
        const pid_t w = ::waitpid(pid, &status, WNOHANG);
        if (w == pid) break;
        if (std::chrono::steady_clock::now() >= deadline) {
            timed_out = true;
            ::kill(-pid, SIGKILL);
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    if (timed_out) {
        ::waitpid(pid, &status, 0);
        ::close(exec_pipe[0]);
        throw Timeout(argv[0] + " timed out after " + std::to_string(timeout.count()) + " ms");
    }

    int exec_errno = 0;
    const ssize_t got = ::read(exec_pipe[0], &exec_errno, sizeof exec_errno);
    ::close(exec_pipe[0]);
    if (got == static_cast<ssize_t>(sizeof exec_errno)) {
        throw ToolMissing("cannot run " + argv[0] + ": " + std::strerror(exec_errno));
    }
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    return result;
}

std::string engraver_input(const std::string& abc_text) {
    std::string out =
        "%%topmargin 0.2cm\n%%botmargin 0.2cm\n%%leftmargin 0.5cm\n%%rightmargin 0.5cm\n"
        "%%topspace 0\n%%titlespace 0\n%%musicspace 0\n%%composerspace 0\n%%infospace 0\n"
        "%%writefields TCOPQwW 0\n%%pagewidth 30cm\n%%scale 1.0\n"
        "X:1\n";
    std::istringstream in(abc_text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("X:", 0) == 0 || line.rfind("T:", 0) == 0) continue;
        out += line + "\n";
    }
    return out;
}

ToolchainRenderer::ToolchainRenderer(ToolchainConfig cfg) : cfg_(std::move(cfg)) {}

bool ToolchainRenderer::available() const {
    return find_executable(cfg_.engraver).has_value() && find_executable(cfg_.converter).has_value();
}

void ToolchainRenderer::render(const RenderJob& job) {
    if (job.dpi < kMinDpi || job.dpi > kMaxDpi) throw RenderError("dpi must be in [72, 600]");
    if (!find_executable(cfg_.engraver)) throw ToolMissing("engraver not found: " + cfg_.engraver);
    if (!find_executable(cfg_.converter)) throw ToolMissing("converter not found: " + cfg_.converter);

    TempDir tmp;
    {
        std::ofstream f(tmp.path() / "snippet.abc", std::ios::binary);
        f << engraver_input(job.abc_text);
        if (!f) throw RenderError("cannot write engraver input");
    }
    const auto eng = run_process({cfg_.engraver, "-q", "-g", "-O", "page.svg", "snippet.abc"}, tmp.path(), cfg_.timeout);
    std::optional<fs::path> page;
    for (const auto& e : fs::directory_iterator(tmp.path())) {
        const auto name = e.path().filename().string();
        if (name.rfind("page", 0) == 0 && e.path().extension() == ".svg" && (!page || e.path() < *page)) page = e.path();
    }
    if (eng.exit_code != 0 || !page) {
        throw ToolFailed(cfg_.engraver, eng.exit_code, excerpt(eng.err.empty() ? eng.out : eng.err));
    }

    std::vector<std::string> conv = {cfg_.converter, "-density", std::to_string(job.dpi), "-background", "white",
                                     page->filename().string(), "-flatten"};
    if (job.trim) {
        conv.push_back("-trim");
        conv.push_back("+repage");
    }
    conv.push_back("out.png");
    const auto cv = run_process(conv, tmp.path(), cfg_.timeout);
    if (cv.exit_code != 0 || !fs::is_regular_file(tmp.path() / "out.png")) {
        throw ToolFailed(cfg_.converter, cv.exit_code, excerpt(cv.err.empty() ? cv.out : cv.err));
    }

    const fs::path target = job.output_path;
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    std::error_code ec;
    fs::rename(tmp.path() / "out.png", target, ec);
    if (ec) {
        // Different filesystem: copy then replace.
        fs::copy_file(tmp.path() / "out.png", target, fs::copy_options::overwrite_existing, ec);
        if (ec) throw RenderError("cannot write " + target.string() + ": " + ec.message());
    }
}

std::map<std::string, std::string> ToolchainRenderer::versions() {
    if (versions_) return *versions_;
    std::map<std::string, std::string> v;
    auto probe = [&](const std::string& tool, const std::vector<std::string>& args) {
        try {
            std::vector<std::string> argv = {tool};
            argv.insert(argv.end(), args.begin(), args.end());
            const auto r = run_process(argv, fs::temp_directory_path(), std::chrono::seconds(10));
            v[tool] = first_line(r.out.empty() ? r.err : r.out);
        } catch (const RenderError&) {
            v[tool] = "unavailable";
        }
    };
    probe(cfg_.engraver, {"-V"});
    probe(cfg_.converter, {"-version"});
    versions_ = v;
    return v;
}

void render_snippet(const RenderJob& job) {
    ToolchainRenderer r;
    r.render(job);
}

VisualSet build_visual_set(const std::vector<qgen::QARecord>& records, const fs::path& out_dir, Renderer& renderer,
                           const VisualOptions& opt) {
    struct Job {
        std::size_t record;
        RenderJob job;
    };
    std::vector<Job> jobs;
    std::vector<VisualRecord> visual(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        visual[i].base = r;
        visual[i].context_image = dataset::context_image_path(r);
        visual[i].choice_images = dataset::choice_image_paths(r);
        if (visual[i].context_image) {
            jobs.push_back({i, {r.abc_context, out_dir / *visual[i].context_image, opt.dpi, true}});
        }
        if (!visual[i].choice_images.empty()) {
            const auto p = qgen::present(r);
            for (std::size_t k = 0; k < 4; ++k) {
                jobs.push_back({i, {p.options[k], out_dir / visual[i].choice_images[k], opt.dpi, true}});
            }
        }
    }

    fs::create_directories(out_dir / "image");
    // First failing job per record, by job order, so output does not depend
    // on scheduling.
    constexpr std::size_t kNone = static_cast<std::size_t>(-1);
    std::vector<std::pair<std::size_t, std::string>> errors(records.size(), {kNone, {}});
    std::mutex mu;
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) {
            std::string err;
            try {
                renderer.render(jobs[j].job);
            } catch (const std::exception& e) {
                err = e.what();
            }
            if (!err.empty()) {
                std::lock_guard lock(mu);
                auto& slot = errors[jobs[j].record];
                if (j < slot.first) slot = {j, jobs[j].job.output_path.filename().string() + ": " + err};
            }
        }
    };
    int n = opt.jobs > 0 ? opt.jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    n = std::max(1, std::min(n, static_cast<int>(jobs.size())));
    std::vector<std::thread> pool;
    for (int i = 1; i < n; ++i) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    VisualSet set;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (errors[i].first == kNone) {
            set.records.push_back(std::move(visual[i]));
        } else {
            set.failures.push_back({records[i].id, errors[i].second});
        }
    }
    std::ofstream(out_dir / "manifest.json", std::ios::binary) << manifest_json(set, opt.dpi, renderer.versions());
    return set;
}

std::string manifest_json(const VisualSet& set, int dpi, const std::map<std::string, std::string>& versions) {
    nlohmann::ordered_json j;
    j["dpi"] = dpi;
    j["tool_versions"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : versions) j["tool_versions"][k] = v;
    j["records"] = nlohmann::ordered_json::array();
    for (const auto& r : set.records) {
        nlohmann::ordered_json e;
        e["id"] = r.base.id;
        e["context_image"] = r.context_image ? nlohmann::ordered_json(*r.context_image) : nlohmann::ordered_json(nullptr);
        e["choice_images"] = r.choice_images;
        j["records"].push_back(e);
    }
    j["failures"] = nlohmann::ordered_json::array();
    for (const auto& f : set.failures) j["failures"].push_back({{"id", f.record_id}, {"error", f.error}});
    return j.dump(2) + "\n";
}

}  // namespace musiqa::render
