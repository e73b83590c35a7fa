#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "aslice/experiment.hpp"
#include "aslice/json_io.hpp"
#include "aslice/loop.hpp"

namespace aslice {

struct ApiResponse {
    int status = 200;
    Json body;
};

class Session;

// Interactive discovery sessions for a human oracle. Each session is the
// step/apply decomposition of run_discovery, retrained when a batch is fully
// answered. Sessions persist as append-only JSON-lines event logs in
// `sessions_dir` and are rebuilt by replay on construction.
//
// Different sessions may be used concurrently; mutations within one session
// are serialised.
class AnnotationService {
public:
    // Throws ConfigError / DataError when the default config cannot be prepared.
    AnnotationService(ExperimentConfig default_config, std::filesystem::path sessions_dir);
    ~AnnotationService();

    AnnotationService(const AnnotationService&) = delete;
    AnnotationService& operator=(const AnnotationService&) = delete;

    // Body: {} or {"config": {...experiment...}, "run": index, "seed": n}.
    ApiResponse create_session(const Json& body);
    ApiResponse next(const std::string& session_id) const;
    // Body: {"id": "...", "s": [0/1,...], "note": "..."}.
    ApiResponse submit_label(const std::string& session_id, const Json& body);
    ApiResponse metrics(const std::string& session_id) const;
    ApiResponse health() const;

    std::vector<std::string> session_ids() const;
    const std::filesystem::path& sessions_dir() const noexcept { return dir_; }

private:
    std::shared_ptr<Session> find(const std::string& id) const;
    std::shared_ptr<const PreparedData> data_for(const ExperimentConfig& cfg);
    void replay_logs();

    ExperimentConfig default_config_;
    std::filesystem::path dir_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::map<std::string, std::shared_ptr<const PreparedData>> data_cache_;
    std::size_t next_index_ = 1;
};

// HTTP+JSON front end:
//   POST /sessions, GET /sessions/{id}/next, POST /sessions/{id}/labels,
//   GET /sessions/{id}/metrics, GET /healthz, static files under / when given.
class HttpFrontend {
public:
    HttpFrontend(AnnotationService& service, std::optional<std::filesystem::path> static_dir = std::nullopt);
    ~HttpFrontend();

    // port 0 picks a free port. Returns false when the address cannot be bound.
    bool bind(const std::string& host, int port);
    int port() const noexcept { return port_; }
    // Blocks until stop() is called.
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = -1;
};

}  // namespace aslice
