#include "vplidar/bridge.hpp"

#include <bit>
#include <cerrno>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include "vplidar/error.hpp"
#include "vplidar/io.hpp"

extern char** environ;

namespace vplidar {
namespace {

static_assert(std::endian::native == std::endian::little, "gradient payloads assume a little-endian host");

std::string errno_text(const char* what) {
    return std::string(what) + ": " + std::strerror(errno);
}

std::filesystem::path make_work_dir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "vplidar-bridge-XXXXXX").string();
    if (mkdtemp(tmpl.data()) == nullptr) throw IoError(errno_text("cannot create bridge work directory"));
    return tmpl;
}

void write_all(int fd, std::string_view data) {
    while (!data.empty()) {
        const ssize_t n = ::write(fd, data.data(), data.size());
        if (n < 0) {
            if (errno == EINTR) continue;
            throw DetectorError(errno_text("provider stdin closed"));
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
}

}  // namespace

std::vector<std::byte> encode_gradient_payload(std::span<const std::array<double, 3>> gradient) {
    std::vector<std::byte> out(gradient.size() * 12);
    std::byte* dst = out.data();
    for (const auto& g : gradient) {
        for (double v : g) {
            const float f = static_cast<float>(v);
            std::memcpy(dst, &f, 4);
            dst += 4;
        }
    }
    return out;
}

std::vector<std::array<double, 3>> decode_gradient_payload(std::span<const std::byte> bytes) {
    if (bytes.size() % 12 != 0) {
        throw FormatError("gradient payload of " + std::to_string(bytes.size()) +
                          " bytes is not a whole number of float32 triples");
    }
    std::vector<std::array<double, 3>> out(bytes.size() / 12);
    const std::byte* src = bytes.data();
    for (auto& g : out) {
        for (double& v : g) {
            float f;
            std::memcpy(&f, src, 4);
            v = f;
            src += 4;
        }
    }
    return out;
}

BridgeDetector::BridgeDetector(BridgeOptions options) : options_(std::move(options)) {
    if (options_.command.empty()) throw ConfigError("bridge detector needs a provider command");
    // A provider that exits mid-request must surface as an error, not kill us.
    std::signal(SIGPIPE, SIG_IGN);
    work_dir_ = make_work_dir();

    int in_pipe[2];
    int out_pipe[2];
    if (pipe2(in_pipe, O_CLOEXEC) != 0) throw DetectorError(errno_text("pipe"));
    if (pipe2(out_pipe, O_CLOEXEC) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw DetectorError(errno_text("pipe"));
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);

    std::string sh = "/bin/sh";
    std::string dash_c = "-c";
    std::string cmd = options_.command;
    char* argv[] = {sh.data(), dash_c.data(), cmd.data(), nullptr};
    pid_t pid = -1;
    const int rc = posix_spawn(&pid, "/bin/sh", &actions, nullptr, argv, environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    if (rc != 0) {
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        throw DetectorError("cannot start provider '" + options_.command + "': " + std::strerror(rc));
    }
    pid_ = pid;
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];

    try {
        info_ = checked({{"op", "hello"}, {"protocol", kProtocolVersion}});
        if (info_.contains("threshold")) threshold_ = info_.at("threshold").get<double>();
    } catch (...) {
        shutdown();
        throw;
    }
}

BridgeDetector::~BridgeDetector() {
    shutdown();
}

void BridgeDetector::shutdown() noexcept {
    if (to_child_ >= 0) {
        ::close(to_child_);
        to_child_ = -1;
    }
    if (pid_ > 0) {
        int status = 0;
        // Closing stdin asks the provider to exit; give it a moment.
        bool exited = false;
        for (int i = 0; i < 50 && !exited; ++i) {
            const pid_t r = ::waitpid(pid_, &status, WNOHANG);
            if (r == pid_ || r < 0) {
                exited = true;
            } else {
                ::usleep(20000);
            }
        }
        if (!exited) {
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, &status, 0);
        }
        pid_ = -1;
    }
    if (from_child_ >= 0) {
        ::close(from_child_);
        from_child_ = -1;
    }
    if (!options_.keep_files && !work_dir_.empty()) {
        std::error_code ec;
        std::filesystem::remove_all(work_dir_, ec);
    }
}

std::string BridgeDetector::read_line() {
    const auto deadline = std::chrono::steady_clock::now() + options_.timeout;
    for (;;) {
        const auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline -
                                                                                std::chrono::steady_clock::now());
        if (left.count() <= 0) throw DetectorError("provider did not answer within the timeout");
        pollfd pfd{from_child_, POLLIN, 0};
        const int pr = ::poll(&pfd, 1, static_cast<int>(left.count()));
        if (pr < 0) {
            if (errno == EINTR) continue;
            throw DetectorError(errno_text("poll"));
        }
        if (pr == 0) continue;
        char chunk[4096];
        const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw DetectorError(errno_text("reading provider output"));
        }
        if (n == 0) throw DetectorError("provider exited");
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

nlohmann::json BridgeDetector::request_locked(nlohmann::json body) {
    if (pid_ <= 0) throw DetectorError("provider is not running");
    const std::uint64_t id = body.contains("id") ? body["id"].get<std::uint64_t>() : next_id_++;
    body["id"] = id;
    write_all(to_child_, body.dump() + "\n");
    const std::string line = read_line();
    nlohmann::json resp;
    try {
        resp = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw DetectorError("provider sent malformed JSON for request " + std::to_string(id) + ": " + e.what());
    }
    if (!resp.is_object() || !resp.contains("id") || resp["id"] != id) {
        throw DetectorError("provider response does not carry request id " + std::to_string(id));
    }
    return resp;
}

nlohmann::json BridgeDetector::request(nlohmann::json body) {
    std::lock_guard lock(mutex_);
    return request_locked(std::move(body));
}

nlohmann::json BridgeDetector::checked(nlohmann::json body) {
    const std::string op = body.value("op", "");
    nlohmann::json resp = request_locked(std::move(body));
    const std::string status = resp.value("status", "");
    if (status != "ok") {
        throw DetectorError("provider " + (status.empty() ? std::string("invalid") : status) + " on " + op + ": " +
                            resp.value("message", std::string("no message")));
    }
    return resp;
}

std::filesystem::path BridgeDetector::snapshot(const Scene& scene, std::uint64_t id) {
    const auto path = work_dir_ / ("scene-" + std::to_string(id) + ".json");
    save_scene_json(path, scene);
    return path;
}

std::vector<Prediction> BridgeDetector::predict(const Scene& scene, std::span<const BoundingBox> candidates) {
    std::lock_guard lock(mutex_);
    const std::uint64_t id = next_id_++;
    const auto scene_path = snapshot(scene, id);
    nlohmann::json cands = nlohmann::json::array();
    for (const BoundingBox& b : candidates) cands.push_back(nlohmann::json::parse(box_to_json(b).dump()));
    nlohmann::json resp;
    try {
        resp = checked({{"id", id}, {"op", "detect"}, {"scene", scene_path.string()}, {"candidates", cands}});
    } catch (...) {
        if (!options_.keep_files) std::filesystem::remove(scene_path);
        throw;
    }
    if (!options_.keep_files) std::filesystem::remove(scene_path);

    std::vector<Prediction> out;
    try {
        for (const auto& d : resp.at("detections")) {
            Prediction p;
            p.box = box_from_json(d.at("box"));
            p.logit = d.at("logit").get<double>();
            p.probability = d.contains("probability") ? d.at("probability").get<double>() : sigmoid(p.logit);
            out.push_back(p);
        }
    } catch (const nlohmann::json::exception& e) {
        throw DetectorError("malformed detect response " + std::to_string(id) + ": " + e.what());
    } catch (const FormatError& e) {
        throw DetectorError("malformed detect response " + std::to_string(id) + ": " + e.what());
    }
    return out;
}

ScoreGradient BridgeDetector::score_gradient(const Scene& scene, const BoundingBox& box,
                                             std::span<const std::size_t> indices) {
    std::lock_guard lock(mutex_);
    const std::uint64_t id = next_id_++;
    const auto scene_path = snapshot(scene, id);
    const auto grad_path = work_dir_ / ("grad-" + std::to_string(id) + ".bin");
    auto cleanup = [&] {
        if (options_.keep_files) return;
        std::error_code ec;
        std::filesystem::remove(scene_path, ec);
        std::filesystem::remove(grad_path, ec);
    };
    ScoreGradient out;
    try {
        const nlohmann::json resp = checked({{"id", id},
                                             {"op", "score"},
                                             {"scene", scene_path.string()},
                                             {"box", box_to_json(box)},
                                             {"targets", std::vector<std::size_t>(indices.begin(), indices.end())},
                                             {"gradient_path", grad_path.string()}});
        out.logit = resp.at("logit").get<double>();
        out.empty = resp.value("empty", false);
        const auto count = resp.at("count").get<std::size_t>();
        if (count != indices.size()) {
            throw DetectorError("provider returned " + std::to_string(count) + " gradients for " +
                                std::to_string(indices.size()) + " target points");
        }
        if (count > 0) {
            const std::filesystem::path path = resp.value("gradient_path", grad_path.string());
            out.gradient = decode_gradient_payload(read_binary_file(path));
            if (out.gradient.size() != count) {
                throw DetectorError("gradient sidecar holds " + std::to_string(out.gradient.size()) +
                                    " triples, response says " + std::to_string(count));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        cleanup();
        throw DetectorError("malformed score response " + std::to_string(id) + ": " + e.what());
    } catch (const Error& e) {
        cleanup();
        if (dynamic_cast<const DetectorError*>(&e)) throw;
        throw DetectorError("score request " + std::to_string(id) + ": " + e.what());
    }
    cleanup();
    return out;
}

}  // namespace vplidar
