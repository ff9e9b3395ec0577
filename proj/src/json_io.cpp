#include "dpvis/json_io.hpp"

#include <fstream>
#include <sstream>

#include "dpvis/error.hpp"

namespace dpvis {

namespace {

[[noreturn]] void bad(const std::string& what, const std::string& path) {
    throw Error(Errc::InvalidJson, what + (path.empty() ? "" : " at " + path), path);
}

const Json& field(const Json& j, const char* key, const std::string& path) {
    if (!j.is_object()) bad("expected an object", path);
    auto it = j.find(key);
    if (it == j.end()) bad(std::string("missing field '") + key + "'", path);
    return *it;
}

template <typename T>
T get(const Json& j, const char* key, const std::string& path) {
    const Json& v = field(j, key, path);
    try {
        return v.get<T>();
    } catch (const nlohmann::json::exception&) {
        bad(std::string("field '") + key + "' has the wrong type", path + "/" + key);
    }
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback, const std::string& path) {
    if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
    return get<T>(j, key, path);
}

void check_format(const Json& j, const char* format) {
    if (!j.is_object()) bad("expected an object", "");
    if (j.contains("format") && j.at("format") != format)
        bad(std::string("expected format ") + format, "/format");
    if (j.contains("version") && j.at("version") != kFormatVersion) bad("unsupported version", "/version");
}

Json vector_json(const Eigen::VectorXd& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Eigen::VectorXd vector_from(const Json& j, const std::string& path) {
    if (!j.is_array()) bad("expected an array", path);
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) bad("expected a number", path + "/" + std::to_string(i));
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

template <typename Derived>
Json matrix_json(const Eigen::MatrixBase<Derived>& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from(const Json& j, const std::string& path) {
    if (!j.is_array()) bad("expected an array of rows", path);
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto row = vector_from(j[static_cast<std::size_t>(r)], path + "/" + std::to_string(r));
        if (row.size() != cols) bad("ragged matrix", path);
        m.row(r) = row.transpose();
    }
    return m;
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json count_matrix_json(const CountMatrix& m) { return matrix_json(m); }

const char* kind_name(VarKind k) {
    switch (k) {
        case VarKind::Binary: return "binary";
        case VarKind::Continuous: return "continuous";
        case VarKind::Categorical: return "categorical";
    }
    return "";
}

const char* role_name(VarRole r) {
    switch (r) {
        case VarRole::DynamicObserved: return "dynamic-observed";
        case VarRole::DynamicContext: return "dynamic-context";
        case VarRole::Static: return "static";
        case VarRole::OutcomeEvent: return "outcome-event";
    }
    return "";
}

VarKind kind_from(const std::string& s, const std::string& path) {
    if (s == "binary") return VarKind::Binary;
    if (s == "continuous") return VarKind::Continuous;
    if (s == "categorical") return VarKind::Categorical;
    bad("unknown variable kind '" + s + "'", path);
}

VarRole role_from(const std::string& s, const std::string& path) {
    if (s == "dynamic-observed") return VarRole::DynamicObserved;
    if (s == "dynamic-context") return VarRole::DynamicContext;
    if (s == "static") return VarRole::Static;
    if (s == "outcome-event") return VarRole::OutcomeEvent;
    bad("unknown variable role '" + s + "'", path);
}

const char* emission_name(EmissionKind k) { return k == EmissionKind::Bernoulli ? "bernoulli" : "gaussian"; }

EmissionKind emission_from(const std::string& s, const std::string& path) {
    if (s == "bernoulli") return EmissionKind::Bernoulli;
    if (s == "gaussian") return EmissionKind::Gaussian;
    bad("unknown emission kind '" + s + "'", path);
}

// Filter AST errors carry their own category and node path.
[[noreturn]] void bad_ast(const std::string& what, const std::string& path) {
    throw Error(Errc::InvalidFilterAst, what + " at " + (path.empty() ? "/" : path), path.empty() ? "/" : path);
}

const Json& ast_field(const Json& j, const char* key, const std::string& path) {
    if (!j.is_object()) bad_ast("expected an object", path);
    auto it = j.find(key);
    if (it == j.end()) bad_ast(std::string("missing field '") + key + "'", path);
    return *it;
}

int ast_int(const Json& j, const char* key, const std::string& path) {
    const Json& v = ast_field(j, key, path);
    if (!v.is_number_integer()) bad_ast(std::string("'") + key + "' must be an integer", path + "/" + key);
    return v.get<int>();
}

double ast_number(const Json& j, const char* key, double fallback, const std::string& path, bool null_is_inf = false) {
    if (!j.contains(key)) return fallback;
    const Json& v = j.at(key);
    if (v.is_null() && null_is_inf) return kUnbounded;
    if (!v.is_number()) bad_ast(std::string("'") + key + "' must be a number", path + "/" + key);
    return v.get<double>();
}

TimeWindow window_from(const Json& j, const char* key, const std::string& path) {
    TimeWindow w;
    if (!j.contains(key) || j.at(key).is_null()) return w;
    const Json& v = j.at(key);
    const std::string p = path + "/" + key;
    if (!v.is_array() || v.size() != 2) bad_ast("time window must be [min, max]", p);
    if (!v[0].is_number()) bad_ast("time window min must be a number", p + "/0");
    w.min = v[0].get<double>();
    if (v[1].is_null()) w.max = kUnbounded;
    else if (v[1].is_number()) w.max = v[1].get<double>();
    else bad_ast("time window max must be a number or null", p + "/1");
    return w;
}

std::vector<int> state_list(const Json& j, const char* key, const std::string& path) {
    const Json& v = ast_field(j, key, path);
    if (!v.is_array()) bad_ast(std::string("'") + key + "' must be an array", path + "/" + key);
    std::vector<int> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number_integer()) bad_ast("state must be an integer", path + "/" + key + "/" + std::to_string(i));
        out.push_back(v[i].get<int>());
    }
    return out;
}

Json histogram_json(const Histogram& h) {
    return Json{{"categorical", h.categorical}, {"edges", h.edges}, {"counts", h.counts}};
}

Json counts_table(const std::vector<CountVector>& cols) {
    Json a = Json::array();
    for (const auto& c : cols) a.push_back(c);
    return a;
}

Json links_json(const std::vector<CountMatrix>& links) {
    Json a = Json::array();
    for (const auto& m : links) a.push_back(count_matrix_json(m));
    return a;
}

}  // namespace

std::string canonical(const Json& j) { return j.dump(2) + "\n"; }

Json parse_json(const std::string& text) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(Errc::InvalidJson, std::string("malformed JSON: ") + e.what());
    }
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_json(ss.str());
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(Errc::Io, "cannot write " + tmp.string());
        out << text;
        out.flush();
        if (!out) throw Error(Errc::Io, "short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(Errc::Io, "cannot replace " + path.string() + ": " + ec.message());
}

void write_json_file(const std::filesystem::path& path, const Json& j) { write_text_atomic(path, canonical(j)); }

Json error_json(const std::exception& e) {
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
        Json j{{"error", to_string(err->code())}, {"message", err->what()}};
        if (!err->location().empty()) j["location"] = err->location();
        return j;
    }
    if (dynamic_cast<const nlohmann::json::exception*>(&e))
        return Json{{"error", to_string(Errc::InvalidJson)}, {"message", e.what()}};
    return Json{{"error", "Internal"}, {"message", e.what()}};
}

// --- data -----------------------------------------------------------------

Json to_json(const Schema& schema) {
    Json vars = Json::array();
    for (const auto& v : schema) vars.push_back({{"name", v.name}, {"kind", kind_name(v.kind)}, {"role", role_name(v.role)}});
    return Json{{"format", "dpvis.schema"}, {"version", kFormatVersion}, {"variables", vars}};
}

Schema schema_from_json(const Json& j) {
    check_format(j, "dpvis.schema");
    const Json& vars = j.is_array() ? j : field(j, "variables", "");
    if (!vars.is_array()) bad("variables must be an array", "/variables");
    Schema out;
    for (std::size_t i = 0; i < vars.size(); ++i) {
        const std::string p = "/variables/" + std::to_string(i);
        out.push_back(Variable{get<std::string>(vars[i], "name", p),
                               kind_from(get<std::string>(vars[i], "kind", p), p + "/kind"),
                               role_from(get<std::string>(vars[i], "role", p), p + "/role")});
    }
    validate_schema(out);
    return out;
}

Json to_json(const Dataset& ds) {
    Json subjects = Json::array();
    for (const auto& s : ds.subjects) {
        Json visits = Json::array();
        for (const auto& v : s.visits) {
            Json values = Json::object();
            for (const auto& [name, cell] : v.values) values[name] = optional_json(cell);
            visits.push_back({{"age", v.age}, {"values", values}});
        }
        Json statics = Json::object();
        for (const auto& [name, value] : s.statics) statics[name] = value ? Json(*value) : Json(nullptr);
        Json events = Json::object();
        for (const auto& [name, age] : s.events) events[name] = age;
        subjects.push_back({{"id", s.id}, {"visits", visits}, {"statics", statics}, {"events", events}});
    }
    return Json{{"format", "dpvis.dataset"},
                {"version", kFormatVersion},
                {"schema", to_json(ds.schema).at("variables")},
                {"subjects", subjects}};
}

Dataset dataset_from_json(const Json& j) {
    check_format(j, "dpvis.dataset");
    Dataset ds;
    ds.schema = schema_from_json(Json{{"variables", field(j, "schema", "")}});
    const Json& subjects = field(j, "subjects", "");
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        const std::string p = "/subjects/" + std::to_string(i);
        const Json& sj = subjects[i];
        Subject s;
        s.id = get<std::string>(sj, "id", p);
        for (const auto& vj : field(sj, "visits", p)) {
            Visit v;
            v.age = get<double>(vj, "age", p);
            for (const auto& [name, cell] : field(vj, "values", p).items())
                v.values[name] = cell.is_null() ? Cell{} : Cell{cell.get<double>()};
            s.visits.push_back(std::move(v));
        }
        if (s.visits.empty()) throw Error(Errc::SubjectWithNoVisits, "subject " + s.id + " has no visits", p);
        const Json statics = get_or<Json>(sj, "statics", Json::object(), p);
        for (const auto& [name, value] : statics.items())
            s.statics[name] = value.is_null() ? std::optional<std::string>{} : std::optional<std::string>{value.get<std::string>()};
        const Json events = get_or<Json>(sj, "events", Json::object(), p);
        for (const auto& [name, age] : events.items())
            s.events[name] = age.get<double>();
        ds.subjects.push_back(std::move(s));
    }
    return ds;
}

Json to_json(const DatasetSummary& s) {
    Json missing = Json::array();
    for (const auto& m : s.missing)
        missing.push_back({{"variable", m.name}, {"n_cells", m.n_cells}, {"n_missing", m.n_missing}, {"missing_rate", m.missing_rate}});
    return Json{{"subject_count", s.subject_count},
                {"visit_count", s.visit_count},
                {"age_range", Json::array({s.age_min, s.age_max})},
                {"missing", missing}};
}

// --- hmm ------------------------------------------------------------------

Json to_json(const HmmConfig& cfg) {
    Json emissions = Json::object();
    for (const auto& [name, kind] : cfg.emissions) emissions[name] = emission_name(kind);
    Json mask = nullptr;
    if (cfg.mask.size() != 0) mask = matrix_json(cfg.mask.cast<int>());
    return Json{{"n_states", cfg.n_states},     {"time_unit", cfg.time_unit},
                {"emissions", emissions},       {"transition_mask", mask},
                {"restarts", cfg.restarts},     {"seed", cfg.seed},
                {"max_iters", cfg.max_iters},   {"rel_tol", cfg.rel_tol},
                {"variance_floor", cfg.variance_floor}, {"prob_floor", cfg.prob_floor}};
}

HmmConfig config_from_json(const Json& j) {
    HmmConfig cfg;
    const std::string p = "";
    cfg.n_states = get<int>(j, "n_states", p);
    cfg.time_unit = get_or<double>(j, "time_unit", cfg.time_unit, p);
    const Json emissions = get_or<Json>(j, "emissions", Json::object(), p);
    for (const auto& [name, kind] : emissions.items()) {
        if (!kind.is_string()) bad("emission kind must be a string", "/emissions/" + name);
        cfg.emissions[name] = emission_from(kind.get<std::string>(), "/emissions/" + name);
    }
    if (j.contains("transition_mask") && !j.at("transition_mask").is_null()) {
        const Json& m = j.at("transition_mask");
        if (m.is_string()) {
            const auto preset = m.get<std::string>();
            if (preset == "full") cfg.mask = full_mask(cfg.n_states);
            else if (preset == "forward") cfg.mask = forward_mask(cfg.n_states);
            else bad("unknown mask preset '" + preset + "'", "/transition_mask");
        } else {
            cfg.mask = (matrix_from(m, "/transition_mask").array() != 0.0).matrix();
        }
    }
    cfg.restarts = get_or<int>(j, "restarts", cfg.restarts, p);
    cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed, p);
    cfg.max_iters = get_or<int>(j, "max_iters", cfg.max_iters, p);
    cfg.rel_tol = get_or<double>(j, "rel_tol", cfg.rel_tol, p);
    cfg.variance_floor = get_or<double>(j, "variance_floor", cfg.variance_floor, p);
    cfg.prob_floor = get_or<double>(j, "prob_floor", cfg.prob_floor, p);
    return cfg;
}

Json to_json(const HmmModel& m) {
    Json emissions = Json::array();
    for (const auto& e : m.emissions) {
        Json ej{{"variable", e.variable}, {"kind", emission_name(e.kind)}};
        if (e.kind == EmissionKind::Bernoulli) {
            ej["p"] = vector_json(e.mean);
        } else {
            ej["mean"] = vector_json(e.mean);
            ej["variance"] = vector_json(e.variance);
        }
        emissions.push_back(std::move(ej));
    }
    return Json{{"format", "dpvis.model"},
                {"version", kFormatVersion},
                {"config", to_json(m.config)},
                {"pi", vector_json(m.pi)},
                {"trans", matrix_json(m.trans)},
                {"emissions", emissions},
                {"train_loglik", m.train_loglik},
                {"loglik_trace", m.loglik_trace}};
}

HmmModel model_from_json(const Json& j) {
    check_format(j, "dpvis.model");
    HmmModel m;
    m.config = config_from_json(field(j, "config", ""));
    m.pi = vector_from(field(j, "pi", ""), "/pi");
    m.trans = matrix_from(field(j, "trans", ""), "/trans");
    const Json& emissions = field(j, "emissions", "");
    for (std::size_t i = 0; i < emissions.size(); ++i) {
        const std::string p = "/emissions/" + std::to_string(i);
        EmissionParams e;
        e.variable = get<std::string>(emissions[i], "variable", p);
        e.kind = emission_from(get<std::string>(emissions[i], "kind", p), p + "/kind");
        if (e.kind == EmissionKind::Bernoulli) {
            e.mean = vector_from(field(emissions[i], "p", p), p + "/p");
        } else {
            e.mean = vector_from(field(emissions[i], "mean", p), p + "/mean");
            e.variance = vector_from(field(emissions[i], "variance", p), p + "/variance");
        }
        m.emissions.push_back(std::move(e));
    }
    m.train_loglik = get_or<double>(j, "train_loglik", 0.0, "");
    m.loglik_trace = get_or<std::vector<double>>(j, "loglik_trace", {}, "");
    const int K = m.n_states();
    if (m.trans.rows() != K || m.trans.cols() != K || K != m.config.n_states) bad("state count mismatch", "/trans");
    for (const auto& e : m.emissions)
        if (e.mean.size() != K || (e.kind == EmissionKind::Gaussian && e.variance.size() != K))
            bad("emission parameter length mismatch", "/emissions");
    return m;
}

Json to_json(const DecodedSubject& d) {
    Json visits = Json::array();
    for (const auto& v : d.visits)
        visits.push_back({{"age", v.age}, {"state", v.state}, {"posterior", vector_json(v.posterior)}});
    return Json{{"subject_id", d.subject_id}, {"loglik", d.loglik}, {"visits", visits}};
}

Json to_json(std::span<const DecodedSubject> decoded) {
    Json subjects = Json::array();
    for (const auto& d : decoded) subjects.push_back(to_json(d));
    return Json{{"format", "dpvis.decoded"}, {"version", kFormatVersion}, {"subjects", subjects}};
}

std::vector<DecodedSubject> decoded_from_json(const Json& j) {
    check_format(j, "dpvis.decoded");
    std::vector<DecodedSubject> out;
    const Json& subjects = field(j, "subjects", "");
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        const std::string p = "/subjects/" + std::to_string(i);
        DecodedSubject d;
        d.subject_id = get<std::string>(subjects[i], "subject_id", p);
        d.loglik = get_or<double>(subjects[i], "loglik", 0.0, p);
        for (const auto& vj : field(subjects[i], "visits", p))
            d.visits.push_back({get<double>(vj, "age", p), get<int>(vj, "state", p), vector_from(field(vj, "posterior", p), p)});
        out.push_back(std::move(d));
    }
    return out;
}

Json to_json(std::span<const CvRow> rows) {
    Json a = Json::array();
    for (const auto& r : rows)
        a.push_back({{"config_index", r.config_index},
                     {"n_states", r.n_states},
                     {"heldout_loglik", r.heldout_loglik},
                     {"heldout_visits", r.heldout_visits},
                     {"loglik_per_visit", r.loglik_per_visit},
                     {"fold_loglik", r.fold_loglik}});
    return Json{{"format", "dpvis.cv"}, {"version", kFormatVersion}, {"rows", a}};
}

// --- patterns -------------------------------------------------------------

Json to_json(std::span<const MinedPattern> patterns) {
    Json a = Json::array();
    for (const auto& p : patterns) a.push_back({{"states", p.states}, {"support", p.support}});
    return a;
}

std::vector<MinedPattern> patterns_from_json(const Json& j) {
    if (!j.is_array()) bad("expected a pattern list", "");
    std::vector<MinedPattern> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string p = "/" + std::to_string(i);
        out.push_back({get<std::vector<int>>(j[i], "states", p), get<int>(j[i], "support", p)});
    }
    return out;
}

// --- query ----------------------------------------------------------------

Json to_json(const TimeWindow& w) {
    return Json::array({w.min, w.max == kUnbounded ? Json(nullptr) : Json(w.max)});
}

Json to_json(const SequenceQuery& q) {
    Json nodes = Json::array();
    for (const auto& n : q.nodes) {
        const char* at = n.node_at == NodeAt::Begin ? "begin" : n.node_at == NodeAt::End ? "end" : "any";
        nodes.push_back({{"state", n.state},
                         {"time_window", to_json(n.time_window)},
                         {"node_at", at},
                         {"min_posterior", n.min_posterior}});
    }
    Json edges = Json::array();
    for (const auto& e : q.edges) {
        edges.push_back({{"max_gap", e.max_gap == kUnbounded ? Json(nullptr) : Json(e.max_gap)},
                         {"order", e.order == EdgeOrder::NextVisit ? "next-visit" : "eventually"}});
    }
    return Json{{"nodes", nodes}, {"edges", edges}};
}

SequenceQuery query_from_json(const Json& j, const std::string& path) {
    SequenceQuery q;
    const Json& nodes = ast_field(j, "nodes", path);
    if (!nodes.is_array()) bad_ast("'nodes' must be an array", path + "/nodes");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const std::string p = path + "/nodes/" + std::to_string(i);
        const Json& nj = nodes[i];
        NodeConstraint n;
        n.state = ast_int(nj, "state", p);
        n.time_window = window_from(nj, "time_window", p);
        if (nj.contains("node_at")) {
            const Json& at = nj.at("node_at");
            if (at == "begin") n.node_at = NodeAt::Begin;
            else if (at == "end") n.node_at = NodeAt::End;
            else if (at == "any" || at.is_null()) n.node_at = NodeAt::Any;
            else bad_ast("node_at must be begin, end or any", p + "/node_at");
        }
        n.min_posterior = ast_number(nj, "min_posterior", 0.0, p);
        q.nodes.push_back(n);
    }
    if (j.contains("edges") && !j.at("edges").is_null()) {
        const Json& edges = j.at("edges");
        if (!edges.is_array()) bad_ast("'edges' must be an array", path + "/edges");
        for (std::size_t i = 0; i < edges.size(); ++i) {
            const std::string p = path + "/edges/" + std::to_string(i);
            const Json& ej = edges[i];
            if (!ej.is_object()) bad_ast("expected an object", p);
            EdgeConstraint e;
            e.max_gap = ast_number(ej, "max_gap", kUnbounded, p, true);
            if (ej.contains("order")) {
                const Json& o = ej.at("order");
                if (o == "next-visit") e.order = EdgeOrder::NextVisit;
                else if (o == "eventually" || o.is_null()) e.order = EdgeOrder::Eventually;
                else bad_ast("order must be next-visit or eventually", p + "/order");
            }
            q.edges.push_back(e);
        }
    } else if (!q.nodes.empty()) {
        q.edges.resize(q.nodes.size() - 1);
    }
    return q;
}

Json to_json(const FilterExpr& f) {
    return std::visit(
        [](const auto& n) -> Json {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, StaticEquals>) {
                return {{"type", "StaticEquals"}, {"var", n.var}, {"value", n.value}};
            } else if constexpr (std::is_same_v<T, StateAtTime>) {
                return {{"type", "StateAtTime"}, {"state", n.state}, {"time_window", to_json(n.time_window)}};
            } else if constexpr (std::is_same_v<T, Transition>) {
                return {{"type", "Transition"},
                        {"from_state", n.from_state},
                        {"to_state", n.to_state},
                        {"time_window", to_json(n.time_window)}};
            } else if constexpr (std::is_same_v<T, PatternContains>) {
                return {{"type", "PatternContains"}, {"states", n.states}};
            } else if constexpr (std::is_same_v<T, SequenceMatches>) {
                return {{"type", "SequenceMatches"}, {"query", to_json(n.query)}};
            } else {
                Json children = Json::array();
                for (const auto& c : n.children) children.push_back(to_json(c));
                return {{"type", "And"}, {"children", children}};
            }
        },
        f.node);
}

FilterExpr filter_from_json(const Json& j, const std::string& path) {
    const Json& type = ast_field(j, "type", path);
    if (!type.is_string()) bad_ast("'type' must be a string", path + "/type");
    const auto t = type.get<std::string>();
    if (t == "StaticEquals") {
        const Json& var = ast_field(j, "var", path);
        const Json& value = ast_field(j, "value", path);
        if (!var.is_string()) bad_ast("'var' must be a string", path + "/var");
        if (!value.is_string() && !value.is_number()) bad_ast("'value' must be a string", path + "/value");
        return FilterExpr{StaticEquals{var.get<std::string>(), value.is_string() ? value.get<std::string>() : value.dump()}};
    }
    if (t == "StateAtTime") return FilterExpr{StateAtTime{ast_int(j, "state", path), window_from(j, "time_window", path)}};
    if (t == "Transition") {
        return FilterExpr{Transition{ast_int(j, "from_state", path), ast_int(j, "to_state", path),
                                     window_from(j, "time_window", path)}};
    }
    if (t == "PatternContains") return FilterExpr{PatternContains{state_list(j, "states", path)}};
    if (t == "SequenceMatches") return FilterExpr{SequenceMatches{query_from_json(ast_field(j, "query", path), path + "/query")}};
    if (t == "And") {
        const Json& children = ast_field(j, "children", path);
        if (!children.is_array()) bad_ast("'children' must be an array", path + "/children");
        And a;
        for (std::size_t i = 0; i < children.size(); ++i)
            a.children.push_back(filter_from_json(children[i], path + "/children/" + std::to_string(i)));
        return FilterExpr{std::move(a)};
    }
    bad_ast("unknown filter type '" + t + "'", path + "/type");
}

Json to_json(const Subgroup& g) {
    return Json{{"id", g.id},
                {"name", g.name},
                {"filter", to_json(g.filter)},
                {"description", describe(g.filter)},
                {"members", g.members},
                {"member_count", g.members.size()},
                {"created_at", g.created_at}};
}

Subgroup subgroup_from_json(const Json& j) {
    Subgroup g;
    g.id = get_or<std::uint64_t>(j, "id", 0, "");
    g.name = get<std::string>(j, "name", "");
    g.filter = filter_from_json(field(j, "filter", ""), "/filter");
    g.members = get<std::vector<std::string>>(j, "members", "");
    std::sort(g.members.begin(), g.members.end());
    g.created_at = get_or<std::string>(j, "created_at", "", "");
    return g;
}

// --- aggregations ---------------------------------------------------------

Json to_json(const FeatureSummary& f) {
    Json vars = Json::array();
    for (std::size_t v = 0; v < f.variables.size(); ++v) {
        Json cells = Json::array();
        for (std::size_t k = 0; k < f.cells[v].size(); ++k) {
            const auto& c = f.cells[v][k];
            cells.push_back({{"state", k},
                             {"mean", optional_json(c.mean)},
                             {"std", optional_json(c.std)},
                             {"normalized_mean", optional_json(c.normalized_mean)},
                             {"n_visits", c.n_visits},
                             {"n_missing", c.n_missing},
                             {"histogram", histogram_json(c.histogram)}});
        }
        vars.push_back({{"variable", f.variables[v]}, {"states", cells}});
    }
    return Json{{"n_states", f.n_states}, {"variables", vars}};
}

Json to_json(const ChordMatrix& c) {
    Json arcs = Json::array();
    for (Eigen::Index i = 0; i < c.pairs.rows(); ++i)
        for (Eigen::Index j = 0; j < c.pairs.cols(); ++j)
            if (i != j && c.pairs(i, j) > 0) arcs.push_back({{"from", i}, {"to", j}, {"count", c.pairs(i, j)}});
    return Json{{"pairs", count_matrix_json(c.pairs)}, {"arcs", arcs}, {"node_sizes", c.node_sizes}};
}

Json to_json(const SankeyByVisit& s) {
    Json j{{"stacks", counts_table(s.stacks)}, {"links", links_json(s.links)}};
    j["anchor"] = s.anchor ? Json(*s.anchor) : Json(nullptr);
    j["anchor_offsets"] = s.anchor_offsets;
    return j;
}

Json to_json(const SankeyByTime& s) {
    return Json{{"bin_months", s.bin_months},
                {"first_bin", s.first_bin},
                {"stacks", counts_table(s.stacks)},
                {"links", links_json(s.links)},
                {"entries", counts_table(s.entries)},
                {"exits", counts_table(s.exits)}};
}

Json to_json(const BipartiteSankey& b) {
    return Json{{"event", b.event}, {"start", b.start}, {"links", count_matrix_json(b.links)}, {"no_event", b.no_event}};
}

Json to_json(const KdeCurve& k) {
    return Json{{"x", k.x}, {"density", k.density}, {"mean", k.mean}, {"bandwidth", k.bandwidth}, {"n", k.n}};
}

Json to_json(const EventDensity& e) {
    return Json{{"event", e.event},
                {"population", to_json(e.population)},
                {"subgroup", e.subgroup ? to_json(*e.subgroup) : Json(nullptr)}};
}

Json to_json(const WaterfallLayout& w) {
    Json dots = Json::array();
    for (const auto& d : w.dots)
        dots.push_back({{"subject_id", d.subject_id}, {"visit_index", d.visit_index}, {"x", d.x}, {"y", d.y}, {"lane", d.lane}});
    Json lines = Json::array();
    for (const auto& t : w.trajectories) {
        Json pts = Json::array();
        for (const auto& p : t.points) pts.push_back(Json::array({p.x, p.y}));
        lines.push_back({{"subject_id", t.subject_id}, {"points", pts}});
    }
    return Json{{"dots", dots}, {"trajectories", lines}};
}

}  // namespace dpvis
