#include "dpvis/service.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <thread>

#include "dpvis/analytics.hpp"
#include "dpvis/error.hpp"
#include "dpvis/json_io.hpp"
#include "dpvis/layout.hpp"
#include "dpvis/patterns.hpp"
#include "dpvis/query.hpp"
#include "dpvis/subgroups.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that clashes with Eigen.
#include <httplib.h>

namespace dpvis {

namespace {

using httplib::Request;
using httplib::Response;

struct ModelEntry {
    std::string id;
    HmmModel model;
};

// Immutable view of the workspace. Requests hold one for their whole
// lifetime, so a concurrent activation never mixes models in a response.
struct Snapshot {
    std::shared_ptr<const Dataset> dataset;
    std::vector<std::shared_ptr<const ModelEntry>> models;  // creation order
    std::string active;
    std::shared_ptr<const std::vector<DecodedSubject>> decoded;

    const ModelEntry* find(const std::string& id) const {
        for (const auto& m : models)
            if (m->id == id) return m.get();
        return nullptr;
    }
    const ModelEntry* active_entry() const { return active.empty() ? nullptr : find(active); }
};

struct Job {
    std::string id;
    std::string status;  // running | succeeded | failed
    std::string model_id;
    Json error;
};

int status_for(const std::exception& e, bool upload) {
    const auto* err = dynamic_cast<const Error*>(&e);
    if (!err) return dynamic_cast<const nlohmann::json::exception*>(&e) ? 400 : 500;
    switch (err->code()) {
        case Errc::NoActiveModel:
        case Errc::NoDataset:
        case Errc::Conflict: return 409;
        case Errc::UnknownSubgroup:
        case Errc::UnknownModel:
        case Errc::UnknownSubject:
        case Errc::UnknownJob: return 404;
        case Errc::InvalidJson: return 400;
        case Errc::Io: return 500;
        default: return upload ? 400 : 422;
    }
}

std::string param(const Request& req, const char* key, const std::string& fallback = "") {
    return req.has_param(key) ? req.get_param_value(key) : fallback;
}

double number_param(const Request& req, const char* key, double fallback) {
    if (!req.has_param(key)) return fallback;
    const auto text = req.get_param_value(key);
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used == text.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    throw Error(Errc::InvalidQuery, std::string("query parameter '") + key + "' must be a number", key);
}

int int_param(const Request& req, const char* key, int fallback) {
    const double v = number_param(req, key, fallback);
    if (v != std::floor(v)) throw Error(Errc::InvalidQuery, std::string("query parameter '") + key + "' must be an integer", key);
    return static_cast<int>(v);
}

std::uint64_t subgroup_id(const std::string& text) {
    try {
        std::size_t used = 0;
        const auto id = std::stoull(text, &used);
        if (used == text.size()) return id;
    } catch (const std::exception&) {
    }
    throw Error(Errc::UnknownSubgroup, "no subgroup with id " + text);
}

Json dataset_json(const Dataset& ds) {
    Json j = to_json(summarize(ds));
    j["schema"] = to_json(ds.schema).at("variables");
    Json statics = Json::object();
    for (const auto& name : ds.variable_names(VarRole::Static)) {
        Json counts = Json::object();
        std::int64_t missing = 0;
        for (const auto& s : ds.subjects) {
            auto it = s.statics.find(name);
            if (it == s.statics.end() || !it->second) ++missing;
            else counts[*it->second] = counts.value(*it->second, 0) + 1;
        }
        statics[name] = {{"counts", counts}, {"missing", missing}};
    }
    j["statics"] = statics;
    Json events = Json::object();
    for (const auto& name : ds.variable_names(VarRole::OutcomeEvent)) {
        std::int64_t n = 0;
        for (const auto& s : ds.subjects) n += static_cast<std::int64_t>(s.events.count(name));
        events[name] = n;
    }
    j["events"] = events;
    Json ids = Json::array();
    for (const auto& s : ds.subjects) ids.push_back(s.id);
    j["subject_ids"] = ids;
    return j;
}

Json model_summary(const ModelEntry& m, bool active) {
    return Json{{"id", m.id},
                {"n_states", m.model.n_states()},
                {"train_loglik", m.model.train_loglik},
                {"iterations", m.model.loglik_trace.size()},
                {"variables", m.model.variables()},
                {"active", active}};
}

std::string numeric_suffix_id(const char* prefix, std::uint64_t n) { return prefix + std::to_string(n); }

}  // namespace

struct Service::Impl {
    ServiceOptions options;
    httplib::Server server;

    std::mutex snapshot_mutex;
    std::shared_ptr<const Snapshot> snapshot = std::make_shared<Snapshot>();
    std::mutex writer;  // single-writer gate for every workspace mutation
    std::uint64_t next_model = 1;
    std::uint64_t next_job = 1;

    std::unique_ptr<SubgroupStore> subgroups;

    std::mutex jobs_mutex;
    std::map<std::string, Job> jobs;
    std::vector<std::thread> workers;
    std::thread background;

    explicit Impl(ServiceOptions opt) : options(std::move(opt)) {
        if (options.workspace_file.empty()) options.workspace_file = options.data_dir / "workspace.json";
        std::filesystem::create_directories(options.data_dir / "models");
        subgroups = std::make_unique<SubgroupStore>(options.data_dir / "subgroups.json");
        load();
        routes();
    }

    std::shared_ptr<const Snapshot> current() {
        std::lock_guard lock(snapshot_mutex);
        return snapshot;
    }

    void publish(std::shared_ptr<const Snapshot> next) {
        std::lock_guard lock(snapshot_mutex);
        snapshot = std::move(next);
    }

    // --- persistence --------------------------------------------------------

    void load() {
        auto snap = std::make_shared<Snapshot>();
        const auto ds_path = options.data_dir / "dataset.json";
        if (std::filesystem::exists(ds_path))
            snap->dataset = std::make_shared<const Dataset>(dataset_from_json(read_json_file(ds_path)));
        Json ws = std::filesystem::exists(options.workspace_file) ? read_json_file(options.workspace_file) : Json::object();
        next_model = ws.value("next_model", std::uint64_t{1});
        next_job = ws.value("next_job", std::uint64_t{1});
        if (snap->dataset) {
            for (const auto& id : ws.value("models", std::vector<std::string>{})) {
                const auto path = options.data_dir / "models" / (id + ".json");
                if (std::filesystem::exists(path))
                    snap->models.push_back(std::make_shared<const ModelEntry>(ModelEntry{id, model_from_json(read_json_file(path))}));
            }
            const auto active = ws.value("active_model", std::string{});
            if (const auto* m = snap->find(active)) {
                snap->active = active;
                snap->decoded = std::make_shared<const std::vector<DecodedSubject>>(decode(m->model, *snap->dataset));
            }
        }
        snapshot = std::move(snap);
    }

    void persist_workspace(const Snapshot& snap) {
        Json models = Json::array();
        for (const auto& m : snap.models) models.push_back(m->id);
        write_json_file(options.workspace_file, Json{{"format", "dpvis.workspace"},
                                                     {"version", kFormatVersion},
                                                     {"active_model", snap.active.empty() ? Json(nullptr) : Json(snap.active)},
                                                     {"models", models},
                                                     {"next_model", next_model},
                                                     {"next_job", next_job}});
    }

    // Subgroups whose filters need states become empty while no model is active.
    void refresh_subgroups(const Snapshot& snap) {
        subgroups->refresh([&](const FilterExpr& f) -> SubjectSet {
            if (!snap.dataset) return {};
            if (f.references_states() && !snap.decoded) return {};
            try {
                return evaluate(*snap.dataset, snap.decoded ? *snap.decoded : std::vector<DecodedSubject>{}, n_states(snap), f);
            } catch (const Error&) {
                return {};
            }
        });
    }

    static int n_states(const Snapshot& snap) {
        const auto* m = snap.active_entry();
        return m ? m->model.n_states() : 0;
    }

    // --- request helpers ----------------------------------------------------

    static const Dataset& need_dataset(const Snapshot& snap) {
        if (!snap.dataset) throw Error(Errc::NoDataset, "no dataset has been uploaded");
        return *snap.dataset;
    }

    static const std::vector<DecodedSubject>& need_decoded(const Snapshot& snap) {
        need_dataset(snap);
        if (!snap.decoded) throw Error(Errc::NoActiveModel, "no model is active");
        return *snap.decoded;
    }

    FilterEvaluator evaluator(const Snapshot& snap) {
        return [&snap](const FilterExpr& f) {
            const auto& ds = need_dataset(snap);
            if (f.references_states()) need_decoded(snap);
            return evaluate(ds, snap.decoded ? *snap.decoded : std::vector<DecodedSubject>{}, n_states(snap), f);
        };
    }

    // ?subgroup=<id> or ?filter=<FilterExpr JSON>; neither = everyone.
    Scope scope_of(const Request& req, const Snapshot& snap) {
        if (req.has_param("subgroup") && !param(req, "subgroup").empty()) {
            const auto g = subgroups->get(subgroup_id(param(req, "subgroup")));
            return SubjectSet(g.members.begin(), g.members.end());
        }
        if (req.has_param("filter") && !param(req, "filter").empty())
            return evaluator(snap)(filter_from_json(parse_json(param(req, "filter"))));
        return std::nullopt;
    }

    static Json stamped(const Snapshot& snap, Json body, const Request& req) {
        body["model_id"] = snap.active.empty() ? Json(nullptr) : Json(snap.active);
        body["subgroup"] = req.has_param("subgroup") ? Json(param(req, "subgroup")) : Json(nullptr);
        return body;
    }

    template <typename F>
    httplib::Server::Handler handler(F f, bool upload = false) {
        return [f, upload](const Request& req, Response& res) {
            try {
                Json body = f(req, res);
                if (res.status == -1) res.status = 200;
                res.set_content(canonical(body), "application/json");
            } catch (const std::exception& e) {
                res.status = status_for(e, upload);
                res.set_content(canonical(error_json(e)), "application/json");
            }
        };
    }

    // --- mutations ----------------------------------------------------------

    Json replace_dataset(Dataset ds) {
        std::lock_guard gate(writer);
        auto snap = std::make_shared<Snapshot>();
        snap->dataset = std::make_shared<const Dataset>(std::move(ds));
        write_json_file(options.data_dir / "dataset.json", to_json(*snap->dataset));
        for (const auto& m : current()->models) std::filesystem::remove(options.data_dir / "models" / (m->id + ".json"));
        persist_workspace(*snap);
        refresh_subgroups(*snap);
        publish(snap);
        return dataset_json(*snap->dataset);
    }

    Json activate(const std::string& id) {
        std::lock_guard gate(writer);
        const auto cur = current();
        const auto* m = cur->find(id);
        if (!m) throw Error(Errc::UnknownModel, "no model with id " + id);
        auto snap = std::make_shared<Snapshot>(*cur);
        snap->active = id;
        snap->decoded = std::make_shared<const std::vector<DecodedSubject>>(decode(m->model, need_dataset(*cur)));
        persist_workspace(*snap);
        refresh_subgroups(*snap);
        publish(snap);
        return Json{{"active_model", id}};
    }

    Json start_training(HmmConfig cfg) {
        const auto snap = current();
        const auto dataset = snap->dataset;
        if (!dataset) throw Error(Errc::NoDataset, "no dataset has been uploaded");
        if (cfg.emissions.empty()) cfg.emissions = default_emissions(*dataset);
        validate(cfg);
        for (const auto& [name, kind] : cfg.emissions) {
            const auto* v = dataset->find_variable(name);
            if (!v || v->role != VarRole::DynamicObserved)
                throw Error(Errc::UnknownVariable, "'" + name + "' is not a dynamic-observed variable", "/emissions/" + name);
        }
        std::string id;
        {
            std::lock_guard gate(writer);
            id = numeric_suffix_id("j", next_job++);
            persist_workspace(*current());
        }
        {
            std::lock_guard lock(jobs_mutex);
            jobs[id] = Job{id, "running", "", nullptr};
            workers.emplace_back([this, id, cfg, dataset] { run_training(id, cfg, dataset); });
        }
        return Json{{"job_id", id}, {"status", "running"}};
    }

    void run_training(const std::string& job_id, const HmmConfig& cfg, std::shared_ptr<const Dataset> dataset) {
        Job done{job_id, "succeeded", "", nullptr};
        try {
            HmmModel model = train(*dataset, cfg);
            std::lock_guard gate(writer);
            const auto cur = current();
            if (cur->dataset != dataset) throw Error(Errc::Conflict, "the dataset was replaced while training");
            auto snap = std::make_shared<Snapshot>(*cur);
            const auto id = numeric_suffix_id("m", next_model++);
            write_json_file(options.data_dir / "models" / (id + ".json"), to_json(model));
            snap->models.push_back(std::make_shared<const ModelEntry>(ModelEntry{id, std::move(model)}));
            persist_workspace(*snap);
            publish(snap);
            done.model_id = id;
        } catch (const std::exception& e) {
            done.status = "failed";
            done.error = error_json(e);
        }
        std::lock_guard lock(jobs_mutex);
        jobs[job_id] = done;
    }

    Json job_json(const std::string& id) {
        std::lock_guard lock(jobs_mutex);
        auto it = jobs.find(id);
        if (it == jobs.end()) throw Error(Errc::UnknownJob, "no job with id " + id);
        const Job& j = it->second;
        return Json{{"id", j.id},
                    {"status", j.status},
                    {"model_id", j.model_id.empty() ? Json(nullptr) : Json(j.model_id)},
                    {"error", j.error}};
    }

    // --- routes -------------------------------------------------------------

    void routes() {
        server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                    {"Access-Control-Allow-Headers", "Content-Type"},
                                    {"Access-Control-Allow-Methods", "GET, POST, PATCH, DELETE, OPTIONS"}});
        server.Options(R"(/.*)", [](const Request&, Response& res) { res.status = 204; });
        server.set_error_handler([](const Request&, Response& res) {
            if (res.body.empty())
                res.set_content(canonical(Json{{"error", "NotFound"}, {"message", "no such endpoint"}}), "application/json");
        });

        server.Get("/health", handler([](const Request&, Response&) { return Json{{"status", "ok"}}; }));

        server.Post("/datasets", handler([this](const Request& req, Response& res) {
            Dataset ds;
            if (req.is_multipart_form_data()) {
                if (!req.has_file("visits")) throw Error(Errc::EmptyInput, "multipart field 'visits' is required");
                if (!req.has_file("schema")) throw Error(Errc::EmptyInput, "multipart field 'schema' is required");
                const auto schema = schema_from_json(parse_json(req.get_file_value("schema").content));
                auto text = [&](const char* key) { return req.has_file(key) ? req.get_file_value(key).content : std::string(); };
                ds = ingest_csv_text(text("visits"), text("statics"), text("events"), schema);
            } else {
                ds = dataset_from_json(parse_json(req.body));
            }
            res.status = 201;
            return replace_dataset(std::move(ds));
        }, true));

        server.Get("/datasets/current", handler([this](const Request&, Response&) {
            return dataset_json(need_dataset(*current()));
        }));

        server.Post("/models/train", handler([this](const Request& req, Response& res) {
            const auto cfg = config_from_json(parse_json(req.body));
            res.status = 202;
            return start_training(cfg);
        }));

        server.Get(R"(/jobs/([^/]+))", handler([this](const Request& req, Response&) { return job_json(req.matches[1]); }));

        server.Post("/models/cv", handler([this](const Request& req, Response&) {
            const auto snap = current();
            const auto& ds = need_dataset(*snap);
            const Json body = parse_json(req.body);
            std::vector<HmmConfig> cfgs;
            if (body.contains("configs")) {
                for (const auto& c : body.at("configs")) cfgs.push_back(config_from_json(c));
            } else {
                const Json base = body.value("base", Json::object());
                for (int k : body.at("states").get<std::vector<int>>()) {
                    Json c = base;
                    c["n_states"] = k;
                    cfgs.push_back(config_from_json(c));
                }
            }
            for (auto& c : cfgs)
                if (c.emissions.empty()) c.emissions = default_emissions(ds);
            const auto rows = cross_validate(ds, cfgs, body.value("folds", 5), body.value("seed", std::uint64_t{0}));
            return to_json(std::span<const CvRow>(rows));
        }));

        server.Get("/models", handler([this](const Request&, Response&) {
            const auto snap = current();
            Json list = Json::array();
            for (const auto& m : snap->models) list.push_back(model_summary(*m, m->id == snap->active));
            return Json{{"active_model", snap->active.empty() ? Json(nullptr) : Json(snap->active)}, {"models", list}};
        }));

        server.Get(R"(/models/([^/]+))", handler([this](const Request& req, Response&) {
            const auto snap = current();
            const auto* m = snap->find(req.matches[1]);
            if (!m) throw Error(Errc::UnknownModel, "no model with id " + std::string(req.matches[1]));
            Json j = to_json(m->model);
            j["id"] = m->id;
            return j;
        }));

        server.Post(R"(/models/([^/]+)/activate)", handler([this](const Request& req, Response&) {
            return activate(req.matches[1]);
        }));

        server.Get("/decode", handler([this](const Request& req, Response&) {
            const auto snap = current();
            const auto& decoded = need_decoded(*snap);
            if (req.has_param("subject")) {
                const auto id = param(req, "subject");
                for (const auto& d : decoded)
                    if (d.subject_id == id) return stamped(*snap, Json{{"subjects", Json::array({to_json(d)})}}, req);
                throw Error(Errc::UnknownSubject, "no subject with id " + id);
            }
            const Scope scope = scope_of(req, *snap);
            Json list = Json::array();
            for (const auto& d : decoded)
                if (!scope || scope->count(d.subject_id)) list.push_back(to_json(d));
            return stamped(*snap, Json{{"subjects", list}}, req);
        }));

        server.Get("/summary/features", handler([this](const Request& req, Response&) {
            const auto snap = current();
            const auto& decoded = need_decoded(*snap);
            return stamped(*snap, to_json(feature_summary(*snap->dataset, decoded, n_states(*snap), scope_of(req, *snap))), req);
        }));

        server.Get("/chord", handler([this](const Request& req, Response&) {
            const auto snap = current();
            const auto& decoded = need_decoded(*snap);
            return stamped(*snap, to_json(chord_matrix(decoded, n_states(*snap), scope_of(req, *snap))), req);
        }));

        server.Get("/pathways/visit", handler([this](const Request& req, Response&) {
            const auto snap = current();
            const auto& decoded = need_decoded(*snap);
            std::optional<int> anchor;
            if (req.has_param("anchor") && !param(req, "anchor").empty()) anchor = int_param(req, "anchor", 0);
            return stamped(*snap, to_json(sankey_by_visit(decoded, n_states(*snap), scope_of(req, *snap), anchor)), req);
        }));

        server.Get("/pathways/time", handler([this](const Request& req, Response&) {
            const auto snap = current();
            const auto& decoded = need_decoded(*snap);
            const double bin = number_param(req, "bin", 12.0);
            return stamped(*snap, to_json(sankey_by_time(decoded, n_states(*snap), scope_of(req, *snap), bin)), req);
        }));

        server.Get("/pathways/bipartite", handler([this](const Request& req, Response&) {
            const auto snap = current();
            const auto& decoded = need_decoded(*snap);
            return stamped(*snap, to_json(bipartite(*snap->dataset, decoded, n_states(*snap), scope_of(req, *snap), param(req, "event"))), req);
        }));

        server.Get("/pathways/waterfall", handler([this](const Request& req, Response&) {
            const auto snap = current();
            const auto& decoded = need_decoded(*snap);
            WaterfallParams params;
            params.radius = number_param(req, "radius", params.radius);
            params.lane_spacing = number_param(req, "lane_spacing", params.lane_spacing);
            return stamped(*snap, to_json(waterfall(decoded, scope_of(req, *snap), params)), req);
        }));

        server.Get("/kde", handler([this](const Request& req, Response&) {
            const auto snap = current();
            const auto& ds = need_dataset(*snap);
            const int steps = int_param(req, "steps", 256);
            return stamped(*snap, to_json(event_density(ds, param(req, "event"), scope_of(req, *snap), steps)), req);
        }));

        server.Get("/patterns", handler([this](const Request& req, Response&) {
            const auto snap = current();
            const auto& decoded = need_decoded(*snap);
            const Scope scope = scope_of(req, *snap);
            std::vector<DecodedSubject> chosen;
            for (const auto& d : decoded)
                if (!scope || scope->count(d.subject_id)) chosen.push_back(d);
            const int min_support = int_param(req, "min_support", kDefaultMinSupport);
            const int top = int_param(req, "top", static_cast<int>(kDefaultTopPatterns));
            if (top < 0) throw Error(Errc::InvalidQuery, "top must be non-negative", "top");
            const auto seqs = mining_sequences(chosen, param(req, "raw") != "true");
            const auto patterns = mine_patterns(seqs, min_support, static_cast<std::size_t>(top));
            return stamped(*snap, Json{{"patterns", to_json(std::span<const MinedPattern>(patterns))},
                                       {"min_support", min_support},
                                       {"top", top},
                                       {"n_sequences", seqs.size()}},
                           req);
        }));

        server.Post("/query", handler([this](const Request& req, Response&) {
            const auto snap = current();
            const auto& ds = need_dataset(*snap);
            const Json body = parse_json(req.body);
            const Json& qj = body.contains("query") ? body.at("query") : body;
            const auto q = query_from_json(qj, body.contains("query") ? "/query" : "");
            const auto& decoded = need_decoded(*snap);
            const auto members = evaluate(ds, decoded, n_states(*snap), FilterExpr{SequenceMatches{q}});
            const Scope scope = scope_of(req, *snap);
            Json ids = Json::array();
            for (const auto& id : members)
                if (!scope || scope->count(id)) ids.push_back(id);
            return stamped(*snap, Json{{"query", to_json(q)}, {"subjects", ids}, {"count", ids.size()}}, req);
        }));

        server.Post("/filters/evaluate", handler([this](const Request& req, Response&) {
            const auto snap = current();
            const auto f = filter_from_json(parse_json(req.body));
            const auto members = evaluator(*snap)(f);
            return stamped(*snap, Json{{"filter", to_json(f)}, {"description", describe(f)}, {"members", members},
                                       {"count", members.size()}},
                           req);
        }));

        server.Get("/subgroups", handler([this](const Request&, Response&) {
            Json list = Json::array();
            for (const auto& g : subgroups->list()) list.push_back(to_json(g));
            return Json{{"subgroups", list}};
        }));

        server.Post("/subgroups", handler([this](const Request& req, Response& res) {
            const Json body = parse_json(req.body);
            if (!body.is_object() || !body.contains("name") || !body.at("name").is_string())
                throw Error(Errc::InvalidFilterAst, "body needs a string 'name'", "/name");
            if (!body.contains("filter")) throw Error(Errc::InvalidFilterAst, "body needs a 'filter'", "/filter");
            auto f = filter_from_json(body.at("filter"), "/filter");
            std::lock_guard gate(writer);
            const auto snap = current();
            res.status = 201;
            return to_json(subgroups->create(body.at("name").get<std::string>(), std::move(f), evaluator(*snap)));
        }));

        server.Get(R"(/subgroups/export)", handler([this](const Request&, Response&) {
            return parse_json(subgroups->export_text());
        }));

        server.Post(R"(/subgroups/import)", handler([this](const Request& req, Response&) {
            std::lock_guard gate(writer);
            const auto imported = subgroups->import_text(req.body);
            Json list = Json::array();
            for (const auto& g : imported) list.push_back(to_json(g));
            return Json{{"subgroups", list}};
        }));

        server.Post(R"(/subgroups/import-static)", handler([this](const Request& req, Response& res) {
            const Json body = parse_json(req.body);
            const auto var = body.value("var", std::string{});
            std::lock_guard gate(writer);
            const auto snap = current();
            const auto created = subgroups->import_from_static(need_dataset(*snap), var, evaluator(*snap));
            Json list = Json::array();
            for (const auto& g : created) list.push_back(to_json(g));
            res.status = 201;
            return Json{{"subgroups", list}};
        }));

        server.Get(R"(/subgroups/(\d+))", handler([this](const Request& req, Response&) {
            return to_json(subgroups->get(subgroup_id(req.matches[1])));
        }));

        server.Patch(R"(/subgroups/(\d+))", handler([this](const Request& req, Response&) {
            const Json body = parse_json(req.body);
            if (!body.is_object() || !body.contains("name") || !body.at("name").is_string())
                throw Error(Errc::InvalidFilterAst, "body needs a string 'name'", "/name");
            std::lock_guard gate(writer);
            return to_json(subgroups->rename(subgroup_id(req.matches[1]), body.at("name").get<std::string>()));
        }));

        server.Delete(R"(/subgroups/(\d+))", handler([this](const Request& req, Response&) {
            std::lock_guard gate(writer);
            const auto id = subgroup_id(req.matches[1]);
            subgroups->remove(id);
            return Json{{"deleted", id}};
        }));
    }

    void join_workers() {
        std::vector<std::thread> pending;
        {
            std::lock_guard lock(jobs_mutex);
            pending.swap(workers);
        }
        for (auto& t : pending)
            if (t.joinable()) t.join();
    }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() {
    stop();
    impl_->join_workers();
}

bool Service::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int Service::start_background(const std::string& host) {
    const int port = impl_->server.bind_to_any_port(host);
    if (port < 0) throw Error(Errc::Io, "cannot bind a port on " + host);
    impl_->background = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port;
}

void Service::stop() {
    impl_->server.stop();
    if (impl_->background.joinable()) impl_->background.join();
}

void Service::wait_for_jobs() { impl_->join_workers(); }

}  // namespace dpvis
