#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <string>

#include <json.hpp>

#include "tabdistill/encoder.hpp"

namespace tabdistill {

inline constexpr const char* kBridgeTimeoutEnv = "TABDISTILL_BRIDGE_TIMEOUT";

/// Bridge timeout in seconds from TABDISTILL_BRIDGE_TIMEOUT, default 120.
inline std::chrono::milliseconds bridge_timeout_from_env() {
    if (const char* s = std::getenv(kBridgeTimeoutEnv)) {
        if (auto v = detail::parse_double(s); v && *v > 0) return std::chrono::milliseconds(static_cast<long long>(*v * 1000));
        throw ConfigError(std::string(kBridgeTimeoutEnv) + " must be a positive number of seconds, got '" + s + "'");
    }
    return std::chrono::seconds(120);
}

// ---------------------------------------------------------------------------
// Wire format (one JSON object per line)

namespace protocol {

inline EncoderHandshake parse_handshake(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw EncoderError(std::string("bridge handshake is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("hello") || !j["hello"].is_object())
        throw EncoderError("bridge handshake lacks the 'hello' object");
    const auto& h = j["hello"];
    try {
        EncoderHandshake hs;
        hs.name = h.at("name").get<std::string>();
        const auto kind = h.at("kind").get<std::string>();
        const auto mode = h.at("dim_mode").get<std::string>();
        const auto dim = h.at("dim").get<long long>();
        if (kind == "tabular")
            hs.policy.kind = EncoderKind::tabular;
        else if (kind == "text")
            hs.policy.kind = EncoderKind::text;
        else
            throw EncoderError("bridge handshake has unknown kind '" + kind + "'");
        if (mode == "per_example")
            hs.policy.dim_mode = DimMode::per_example;
        else if (mode == "fixed")
            hs.policy.dim_mode = DimMode::fixed;
        else
            throw EncoderError("bridge handshake has unknown dim_mode '" + mode + "'");
        if (dim < 1) throw EncoderError("bridge handshake declares dim " + std::to_string(dim));
        hs.policy.dim = static_cast<std::size_t>(dim);
        return hs;
    } catch (const nlohmann::json::exception& e) {
        throw EncoderError(std::string("malformed bridge handshake: ") + e.what());
    }
}

inline std::string handshake_line(const EncoderHandshake& hs) {
    nlohmann::ordered_json j;
    j["hello"]["name"] = hs.name;
    j["hello"]["kind"] = to_string(hs.policy.kind);
    j["hello"]["dim_mode"] = to_string(hs.policy.dim_mode);
    j["hello"]["dim"] = hs.policy.dim;
    return j.dump();
}

inline std::string text_request(long long id, const std::string& prompt) {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["kind"] = "text";
    j["prompt"] = prompt;
    return j.dump();
}

inline std::string tabular_request(long long id, const Matrix& X, std::span<const std::uint8_t> y) {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["kind"] = "tabular";
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < X.rows; ++r) {
        auto row = X.row(r);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    j["X"] = std::move(rows);
    auto labels = nlohmann::ordered_json::array();
    for (auto v : y) labels.push_back(static_cast<int>(v));
    j["y"] = std::move(labels);
    return j.dump();
}

/// Validates a response line against the request id and expected width.
inline std::vector<double> parse_response(const std::string& line, long long expected_id, std::size_t expected_dim) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw EncoderError(std::string("bridge response is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_number_integer())
        throw EncoderError("bridge response lacks an integer 'id'");
    const auto id = j["id"].get<long long>();
    if (j.contains("error")) {
        const std::string msg = j["error"].is_string() ? j["error"].get<std::string>() : j["error"].dump();
        throw EncoderError("bridge reported an error for request " + std::to_string(id) + ": " + msg);
    }
    if (id != expected_id)
        throw EncoderError("protocol violation: response id " + std::to_string(id) + " for request " +
                           std::to_string(expected_id));
    if (!j.contains("embedding") || !j["embedding"].is_array())
        throw EncoderError("protocol violation: response lacks an 'embedding' array");
    std::vector<double> values;
    values.reserve(j["embedding"].size());
    for (const auto& v : j["embedding"]) {
        if (!v.is_number()) throw EncoderError("protocol violation: non-numeric embedding entry");
        values.push_back(v.get<double>());
        if (!std::isfinite(values.back())) throw EncoderError("bridge returned a non-finite embedding entry");
    }
    if (values.size() != expected_dim)
        throw EncoderError("embedding dimension mismatch: expected " + std::to_string(expected_dim) + " values, got " +
                           std::to_string(values.size()));
    return values;
}

}  // namespace protocol

// ---------------------------------------------------------------------------

/// Session with an encoder bridge child process over its stdin/stdout.
/// One request in flight at a time.
class ExternalEncoderClient final : public FrozenEncoder {
public:
    explicit ExternalEncoderClient(const std::string& command,
                                   std::chrono::milliseconds timeout = bridge_timeout_from_env())
        : command_(command), timeout_(timeout) {
        ::signal(SIGPIPE, SIG_IGN);
        int in_pipe[2], out_pipe[2];
        if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw EncoderError("pipe failed: " + std::string(std::strerror(errno)));
        if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
            ::close(in_pipe[0]);
            ::close(in_pipe[1]);
            throw EncoderError("pipe failed: " + std::string(std::strerror(errno)));
        }
        pid_ = ::fork();
        if (pid_ < 0) throw EncoderError("fork failed: " + std::string(std::strerror(errno)));
        if (pid_ == 0) {
            ::setpgid(0, 0);
            ::dup2(in_pipe[0], STDIN_FILENO);
            ::dup2(out_pipe[1], STDOUT_FILENO);
            ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
            ::_exit(127);
        }
        ::close(in_pipe[0]);
        ::close(out_pipe[1]);
        to_child_ = in_pipe[1];
        from_child_ = out_pipe[0];
        try {
            handshake_ = protocol::parse_handshake(read_line("handshake"));
        } catch (...) {
            shutdown();
            throw;
        }
    }

    ExternalEncoderClient(const ExternalEncoderClient&) = delete;
    ExternalEncoderClient& operator=(const ExternalEncoderClient&) = delete;

    ~ExternalEncoderClient() override { shutdown(); }

    const EncoderHandshake& handshake() const override { return handshake_; }
    const std::string& command() const { return command_; }

    EmbeddingVector encode(const EncoderInput& input) override {
        if (handshake_.policy.kind == EncoderKind::text) {
            if (!input.raw || !input.schema) throw EncoderError("text encoder needs raw rows and the schema");
            return encode_text(build_prompt(*input.raw, *input.schema, FeaturePermutation::identity(input.raw->num_features())));
        }
        if (!input.encoded) throw EncoderError("tabular encoder needs the encoded dataset");
        return encode_tabular(*input.encoded);
    }

    EmbeddingVector encode_text(const PromptText& prompt) {
        if (handshake_.policy.kind != EncoderKind::text)
            throw EncoderError("text payload sent to tabular encoder '" + handshake_.name + "'");
        const auto id = next_id_++;
        const auto dim = embedding_dim(handshake_.policy, prompt.example_count);
        return {roundtrip(protocol::text_request(id, prompt.text), id, dim), handshake_.name};
    }

    EmbeddingVector encode_tabular(const EncodedDataset& ds) {
        if (handshake_.policy.kind != EncoderKind::tabular)
            throw EncoderError("tabular payload sent to text encoder '" + handshake_.name + "'");
        const auto id = next_id_++;
        const auto dim = embedding_dim(handshake_.policy, ds.size());
        return {roundtrip(protocol::tabular_request(id, ds.X, ds.y), id, dim), handshake_.name};
    }

private:
    std::vector<double> roundtrip(const std::string& request, long long id, std::size_t dim) {
        write_line(request);
        return protocol::parse_response(read_line("response to request " + std::to_string(id)), id, dim);
    }

    void write_line(const std::string& line) {
        if (to_child_ < 0) throw EncoderError("bridge session is closed");
        std::string buf = line + "\n";
        const char* p = buf.data();
        std::size_t left = buf.size();
        while (left > 0) {
            const auto n = ::write(to_child_, p, left);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw EncoderError("writing to bridge failed: " + std::string(std::strerror(errno)));
            }
            p += n;
            left -= static_cast<std::size_t>(n);
        }
    }

    std::string read_line(const std::string& what) {
        const auto deadline = std::chrono::steady_clock::now() + timeout_;
        while (true) {
            if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
                std::string line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return line;
            }
            const auto remaining =
                std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
            if (remaining.count() <= 0)
                throw EncoderError("timed out after " + std::to_string(timeout_.count()) + " ms waiting for bridge " + what);
            pollfd pfd{from_child_, POLLIN, 0};
            const int rc = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
            if (rc < 0) {
                if (errno == EINTR) continue;
                throw EncoderError("poll on bridge failed: " + std::string(std::strerror(errno)));
            }
            if (rc == 0) continue;
            char chunk[65536];
            const auto n = ::read(from_child_, chunk, sizeof chunk);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw EncoderError("reading from bridge failed: " + std::string(std::strerror(errno)));
            }
            if (n == 0) throw EncoderError("bridge closed its output while waiting for " + what);
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    void shutdown() {
        if (to_child_ >= 0) ::close(to_child_);
        if (from_child_ >= 0) ::close(from_child_);
        to_child_ = from_child_ = -1;
        if (pid_ > 0) {
            int status = 0;
            // Give the bridge a moment to exit on closed input, then stop it.
            for (int i = 0; i < 50; ++i) {
                if (::waitpid(pid_, &status, WNOHANG) == pid_) {
                    pid_ = -1;
                    return;
                }
                ::usleep(10000);
            }
            ::kill(-pid_, SIGKILL);
            ::waitpid(pid_, &status, 0);
            pid_ = -1;
        }
    }

    std::string command_;
    std::chrono::milliseconds timeout_;
    EncoderHandshake handshake_;
    pid_t pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
    long long next_id_ = 0;
};

}  // namespace tabdistill
