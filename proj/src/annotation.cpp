#include "aslice/annotation.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <shared_mutex>
#include <sstream>
#include <variant>

#include "aslice/errors.hpp"
#include "httplib.h"

namespace aslice {

namespace {

std::string now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ApiResponse error_response(int status, const std::string& message) { return {status, Json{{"error", message}}}; }

std::string format_session_id(std::size_t index) {
    std::string num = std::to_string(index);
    if (num.size() < 6) num.insert(0, 6 - num.size(), '0');
    return "s" + num;
}

}  // namespace

// ---------------------------------------------------------------------------
// Session

class Session {
public:
    Session(std::string id, ExperimentConfig cfg, std::size_t run_index, std::shared_ptr<const PreparedData> data,
            std::filesystem::path log_path, std::string created)
        : id_(std::move(id)),
          cfg_(std::move(cfg)),
          run_index_(run_index),
          data_(std::move(data)),
          log_path_(std::move(log_path)),
          created_(created),
          updated_(std::move(created)) {
        dc_ = cfg_.runs.at(run_index_).config;
        dc_.seed = cfg_.seeds.front();
        dc_.validate();
        const Dataset& train = data_->train;
        if (!data_->test.has_ground_truth()) throw DataError("test records need ground-truth slice vectors");
        const auto seed_rows = draw_seed_set(train, dc_);
        std::vector<SliceVector> seed_answers;
        for (auto r : seed_rows) {
            const auto& rec = train.record(r);
            if (!rec.s) throw DataError("seed example " + rec.id + " has no ground-truth slice vector");
            seed_ids_.push_back(rec.id);
            seed_answers.push_back(*rec.s);
        }
        state_ = make_pool(train, dc_, seed_rows, seed_answers);
        advance();
    }

    Json create_event() const {
        return Json{{"event", "create"},
                    {"session", id_},
                    {"config", to_json(cfg_)},
                    {"run", run_index_},
                    {"at", created_}};
    }

    // Validates a submission; on success returns the parsed answer, otherwise the error response.
    std::variant<LabelAnswer, ApiResponse> validate(const Json& body) const {
        if (!body.is_object()) return error_response(400, "label body must be a JSON object");
        if (!body.contains("id") || !body["id"].is_string()) return error_response(400, "label needs a string \"id\"");
        if (!body.contains("s") || !body["s"].is_array()) return error_response(400, "label needs an \"s\" array");
        if (body.contains("note") && !body["note"].is_string() && !body["note"].is_null())
            return error_response(400, "\"note\" must be a string");
        LabelAnswer a;
        a.id = body["id"].get<std::string>();
        const Dataset& train = data_->train;
        if (body["s"].size() != train.k())
            return error_response(400, "\"s\" must have " + std::to_string(train.k()) + " entries");
        for (const auto& v : body["s"]) {
            if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1))
                return error_response(400, "\"s\" entries must be 0 or 1");
            a.s.push_back(static_cast<std::uint8_t>(v.get<int>()));
        }
        const auto row = train.find(a.id);
        if (!row) return error_response(404, "unknown example id " + a.id);
        if (std::find(state_.annotated.begin(), state_.annotated.end(), *row) != state_.annotated.end())
            return error_response(409, "example " + a.id + " is already annotated");
        const auto it = std::find(state_.pending.begin(), state_.pending.end(), *row);
        if (it == state_.pending.end()) return error_response(404, "example " + a.id + " is not pending");
        if (received_[static_cast<std::size_t>(it - state_.pending.begin())])
            return error_response(409, "example " + a.id + " was already answered");
        return a;
    }

    // Records a validated answer; completes the round when the batch is full.
    void accept(LabelAnswer answer, std::string at) {
        const auto row = *data_->train.find(answer.id);
        const auto pos = static_cast<std::size_t>(std::find(state_.pending.begin(), state_.pending.end(), row) -
                                                  state_.pending.begin());
        received_[pos] = std::move(answer);
        updated_ = std::move(at);
        if (std::all_of(received_.begin(), received_.end(), [](const auto& r) { return r.has_value(); })) {
            std::vector<LabelAnswer> answers;
            for (auto& r : received_) answers.push_back(std::move(*r));
            state_ = apply_answers(state_, data_->train, answers);
            advance();
        }
    }

    void append_log(const Json& event) const {
        std::ofstream out(log_path_, std::ios::app | std::ios::binary);
        if (!out) throw DataError("cannot append to session log " + log_path_.string());
        out << event.dump() << '\n';
        out.flush();
        if (!out) throw DataError("failed writing session log " + log_path_.string());
    }

    bool complete() const noexcept { return complete_; }

    Json status_fields() const {
        return Json{{"session", id_},
                    {"status", complete_ ? "complete" : "active"},
                    {"round", state_.round},
                    {"budget_remaining", state_.budget_remaining},
                    {"labels_used", state_.labels_used()}};
    }

    Json next_item() const {
        Json j = status_fields();
        if (complete_) return j;
        const Dataset& train = data_->train;
        std::size_t answered = 0;
        std::optional<std::size_t> first;
        for (std::size_t i = 0; i < state_.pending.size(); ++i) {
            if (received_[i])
                ++answered;
            else if (!first)
                first = i;
        }
        Json pending = Json::array();
        for (auto r : state_.pending) pending.push_back(train.record(r).id);
        const auto& rec = train.record(state_.pending[*first]);
        Json example{{"id", rec.id}, {"y", rec.y}, {"provenance", train.provenance()}};
        example["text"] = rec.text ? Json(*rec.text) : Json(nullptr);
        j["example"] = std::move(example);
        j["slice_names"] = train.slice_names();
        j["pending"] = std::move(pending);
        j["answered"] = answered;
        return j;
    }

    Json metrics() const {
        Json j = status_fields();
        Json curve = Json::array();
        for (const auto& pt : curve_) curve.push_back(to_json(pt));
        Json log = Json::array();
        for (const auto& e : log_) log.push_back(to_json(e));
        j["slice_names"] = data_->train.slice_names();
        j["oracle_answers"] = state_.oracle_answers();
        j["seed_ids"] = seed_ids_;
        j["curve"] = std::move(curve);
        j["query_log"] = std::move(log);
        j["config"] = to_json(dc_);
        j["created"] = created_;
        j["updated"] = updated_;
        return j;
    }

    mutable std::shared_mutex mu;

private:
    // Same order as run_discovery: train, evaluate, then select the next batch.
    void advance() {
        const Dataset& train = data_->train;
        SliceModel model = train_round_model(train, state_, dc_);
        const bool done = state_.finished();
        if (dc_.eval_every_round || done) curve_.push_back(evaluate_round(model, data_->test, state_));
        if (done) {
            complete_ = true;
            received_.clear();
            return;
        }
        const QueryBatch batch = step_next_batch(state_, train, model, dc_);
        QueryLogEntry entry{state_.round, {}, batch.scores};
        for (auto r : batch.indices) entry.ids.push_back(train.record(r).id);
        log_.push_back(std::move(entry));
        received_.assign(state_.pending.size(), std::nullopt);
    }

    std::string id_;
    ExperimentConfig cfg_;
    std::size_t run_index_ = 0;
    DiscoveryConfig dc_;
    std::shared_ptr<const PreparedData> data_;
    std::filesystem::path log_path_;
    std::string created_;
    std::string updated_;
    PoolState state_;
    std::vector<std::string> seed_ids_;
    LearningCurve curve_;
    std::vector<QueryLogEntry> log_;
    std::vector<std::optional<LabelAnswer>> received_;
    bool complete_ = false;
};

// ---------------------------------------------------------------------------
// AnnotationService

AnnotationService::AnnotationService(ExperimentConfig default_config, std::filesystem::path sessions_dir)
    : default_config_(std::move(default_config)), dir_(std::move(sessions_dir)) {
    if (default_config_.dataset_path) default_config_.dataset_path = std::filesystem::absolute(*default_config_.dataset_path);
    default_config_.validate();
    data_for(default_config_);
    std::filesystem::create_directories(dir_);
    replay_logs();
}

AnnotationService::~AnnotationService() = default;

std::shared_ptr<const PreparedData> AnnotationService::data_for(const ExperimentConfig& cfg) {
    Json key = to_json(cfg);
    key.erase("runs");
    key.erase("seeds");
    key.erase("out");
    key.erase("setup");
    const std::string k = key.dump();
    {
        std::lock_guard lock(mu_);
        if (auto it = data_cache_.find(k); it != data_cache_.end()) return it->second;
    }
    auto data = std::make_shared<const PreparedData>(prepare_data(cfg));
    std::lock_guard lock(mu_);
    return data_cache_.emplace(k, std::move(data)).first->second;
}

std::shared_ptr<Session> AnnotationService::find(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

std::vector<std::string> AnnotationService::session_ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> ids;
    for (const auto& [id, s] : sessions_) ids.push_back(id);
    return ids;
}

void AnnotationService::replay_logs() {
    std::vector<std::filesystem::path> logs;
    for (const auto& entry : std::filesystem::directory_iterator(dir_))
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") logs.push_back(entry.path());
    std::sort(logs.begin(), logs.end());
    for (const auto& path : logs) {
        std::ifstream in(path, std::ios::binary);
        std::string line;
        std::shared_ptr<Session> session;
        std::string id = path.stem().string();
        while (std::getline(in, line)) {
            Json event;
            try {
                event = Json::parse(line);
            } catch (const Json::parse_error&) {
                break;  // torn final write
            }
            const auto type = event.value("event", std::string());
            if (type == "create") {
                ExperimentConfig cfg = experiment_from_json(event.at("config"));
                session = std::make_shared<Session>(id, cfg, event.at("run").get<std::size_t>(), data_for(cfg), path,
                                                    event.value("at", std::string()));
            } else if (type == "label" && session) {
                auto checked = session->validate(event);
                if (auto* answer = std::get_if<LabelAnswer>(&checked))
                    session->accept(std::move(*answer), event.value("at", std::string()));
                else
                    throw DataError("session log " + path.string() + " contains a rejected label event");
            }
        }
        if (!session) continue;
        std::lock_guard lock(mu_);
        sessions_[id] = session;
        if (id.size() > 1 && id[0] == 's') {
            try {
                next_index_ = std::max(next_index_, static_cast<std::size_t>(std::stoull(id.substr(1))) + 1);
            } catch (const std::exception&) {
            }
        }
    }
}

ApiResponse AnnotationService::create_session(const Json& body) {
    if (!body.is_object() && !body.is_null()) return error_response(400, "session body must be a JSON object");
    ExperimentConfig cfg = default_config_;
    std::size_t run_index = 0;
    try {
        if (body.is_object()) {
            for (const auto& [key, value] : body.items())
                if (key != "config" && key != "run" && key != "seed")
                    return error_response(400, "unknown field \"" + key + "\"");
            if (body.contains("config")) {
                cfg = experiment_from_json(body.at("config"), std::filesystem::current_path());
                if (cfg.dataset_path) cfg.dataset_path = std::filesystem::absolute(*cfg.dataset_path);
            }
            if (body.contains("run")) {
                if (!body.at("run").is_number_unsigned()) return error_response(400, "\"run\" must be an index");
                run_index = body.at("run").get<std::size_t>();
            }
            if (body.contains("seed")) {
                if (!body.at("seed").is_number_unsigned()) return error_response(400, "\"seed\" must be a non-negative integer");
                cfg.seeds = {body.at("seed").get<std::uint64_t>()};
            }
        }
        if (run_index >= cfg.runs.size()) return error_response(400, "\"run\" index out of range");
        cfg.seeds.resize(1);
        auto data = data_for(cfg);

        std::string id;
        {
            std::lock_guard lock(mu_);
            id = format_session_id(next_index_++);
        }
        const auto path = dir_ / (id + ".jsonl");
        auto session = std::make_shared<Session>(id, cfg, run_index, std::move(data), path, now_iso8601());
        std::filesystem::remove(path);
        session->append_log(session->create_event());
        {
            std::lock_guard lock(mu_);
            sessions_[id] = session;
        }
        std::shared_lock read(session->mu);
        return {200, session->next_item()};
    } catch (const ConfigError& e) {
        return error_response(400, e.what());
    } catch (const DataError& e) {
        return error_response(400, e.what());
    } catch (const DegenerateLabels& e) {
        return error_response(400, e.what());
    }
}

ApiResponse AnnotationService::next(const std::string& session_id) const {
    auto s = find(session_id);
    if (!s) return error_response(404, "unknown session " + session_id);
    std::shared_lock lock(s->mu);
    return {200, s->next_item()};
}

ApiResponse AnnotationService::submit_label(const std::string& session_id, const Json& body) {
    auto s = find(session_id);
    if (!s) return error_response(404, "unknown session " + session_id);
    std::unique_lock lock(s->mu);
    auto checked = s->validate(body);
    if (auto* err = std::get_if<ApiResponse>(&checked)) return *err;
    auto answer = std::get<LabelAnswer>(std::move(checked));
    const std::string at = now_iso8601();
    Json event{{"event", "label"}, {"id", answer.id}, {"s", body.at("s")}, {"at", at}};
    if (body.contains("note") && body["note"].is_string()) event["note"] = body["note"];
    s->append_log(event);
    const std::string accepted = answer.id;
    const auto round_before = s->status_fields()["round"].get<std::size_t>();
    s->accept(std::move(answer), at);
    Json j = s->status_fields();
    j["accepted"] = accepted;
    j["batch_complete"] = j["round"].get<std::size_t>() != round_before || s->complete();
    return {200, std::move(j)};
}

ApiResponse AnnotationService::metrics(const std::string& session_id) const {
    auto s = find(session_id);
    if (!s) return error_response(404, "unknown session " + session_id);
    std::shared_lock lock(s->mu);
    return {200, s->metrics()};
}

ApiResponse AnnotationService::health() const {
    std::lock_guard lock(mu_);
    return {200, Json{{"status", "ok"}, {"sessions", sessions_.size()}}};
}

// ---------------------------------------------------------------------------
// HTTP

struct HttpFrontend::Impl {
    httplib::Server server;
};

HttpFrontend::HttpFrontend(AnnotationService& service, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>()) {
    auto& svr = impl_->server;
    // httplib's default adds SO_REUSEPORT, which would let a second server share the port.
    svr.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    auto reply = [](httplib::Response& res, const ApiResponse& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    auto parse_body = [](const httplib::Request& req, Json& out) {
        if (req.body.find_first_not_of(" \t\r\n") == std::string::npos) {
            out = Json(nullptr);
            return true;
        }
        try {
            out = Json::parse(req.body);
            return true;
        } catch (const Json::parse_error&) {
            return false;
        }
    };

    svr.Get("/healthz", [&service, reply](const httplib::Request&, httplib::Response& res) { reply(res, service.health()); });
    svr.Post("/sessions", [&service, reply, parse_body](const httplib::Request& req, httplib::Response& res) {
        Json body;
        if (!parse_body(req, body)) return reply(res, error_response(400, "request body is not valid JSON"));
        reply(res, service.create_session(body));
    });
    svr.Get(R"(/sessions/([^/]+)/next)", [&service, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.next(req.matches[1]));
    });
    svr.Post(R"(/sessions/([^/]+)/labels)", [&service, reply, parse_body](const httplib::Request& req,
                                                                          httplib::Response& res) {
        Json body;
        if (!parse_body(req, body)) return reply(res, error_response(400, "request body is not valid JSON"));
        reply(res, service.submit_label(req.matches[1], body));
    });
    svr.Get(R"(/sessions/([^/]+)/metrics)", [&service, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.metrics(req.matches[1]));
    });
    svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string msg = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            msg = e.what();
        } catch (...) {
        }
        res.status = 500;
        res.set_content(Json{{"error", msg}}.dump(), "application/json");
    });
    if (static_dir) svr.set_mount_point("/", static_dir->string());
}

HttpFrontend::~HttpFrontend() { stop(); }

bool HttpFrontend::bind(const std::string& host, int port) {
    if (port == 0) {
        port_ = impl_->server.bind_to_any_port(host);
        return port_ > 0;
    }
    if (!impl_->server.bind_to_port(host, port)) return false;
    port_ = port;
    return true;
}

void HttpFrontend::run() { impl_->server.listen_after_bind(); }

void HttpFrontend::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace aslice
