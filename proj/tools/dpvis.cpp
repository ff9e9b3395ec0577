#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dpvis/analytics.hpp"
#include "dpvis/error.hpp"
#include "dpvis/hmm.hpp"
#include "dpvis/json_io.hpp"
#include "dpvis/layout.hpp"
#include "dpvis/patterns.hpp"
#include "dpvis/query.hpp"
#include "dpvis/service.hpp"
#include "dpvis/subgroups.hpp"
#include "dpvis/synth.hpp"

namespace fs = std::filesystem;
using namespace dpvis;

namespace {

// Writes canonical JSON to `path`, or stdout when empty.
void emit(const Json& j, const std::string& path) {
    if (path.empty()) std::cout << canonical(j);
    else write_json_file(path, j);
}

std::vector<int> parse_states(const std::string& spec) {
    auto number = [&](std::string_view s) {
        int v = 0;
        auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || end != s.data() + s.size() || v < 1)
            throw Error(Errc::InvalidConfig, "bad state count '" + std::string(s) + "' in --states " + spec);
        return v;
    };
    std::vector<int> out;
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const auto dots = part.find("..");
        if (dots == std::string::npos) {
            out.push_back(number(part));
            continue;
        }
        const int lo = number(std::string_view(part).substr(0, dots)), hi = number(std::string_view(part).substr(dots + 2));
        if (lo > hi) throw Error(Errc::InvalidConfig, "empty state range " + part);
        for (int k = lo; k <= hi; ++k) out.push_back(k);
    }
    if (out.empty()) throw Error(Errc::InvalidConfig, "--states is empty");
    return out;
}

struct TrainFlags {
    int states = 3;
    std::string mask = "full";
    int restarts = 5;
    std::uint64_t seed = 0;
    double time_unit = 1.0;
    int max_iters = 500;
    double rel_tol = 1e-6;
    double variance_floor = 1e-4;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f, bool with_states) {
    if (with_states) cmd->add_option("--states", f.states, "Number of hidden states")->capture_default_str();
    cmd->add_option("--mask", f.mask, "Transition mask preset")->check(CLI::IsMember({"full", "forward"}))->capture_default_str();
    cmd->add_option("--restarts", f.restarts, "EM restarts")->capture_default_str();
    cmd->add_option("--seed", f.seed, "Random seed")->capture_default_str();
    cmd->add_option("--time-unit", f.time_unit, "Months per grid step")->capture_default_str();
    cmd->add_option("--max-iters", f.max_iters, "EM iteration cap")->capture_default_str();
    cmd->add_option("--rel-tol", f.rel_tol, "Relative log-likelihood tolerance")->capture_default_str();
    cmd->add_option("--variance-floor", f.variance_floor, "Gaussian variance floor (fraction of global variance)")
        ->capture_default_str();
}

HmmConfig make_config(const TrainFlags& f, int states, const Dataset& ds) {
    HmmConfig cfg;
    cfg.n_states = states;
    cfg.time_unit = f.time_unit;
    cfg.emissions = default_emissions(ds);
    cfg.mask = f.mask == "forward" ? forward_mask(states) : full_mask(states);
    cfg.restarts = f.restarts;
    cfg.seed = f.seed;
    cfg.max_iters = f.max_iters;
    cfg.rel_tol = f.rel_tol;
    cfg.variance_floor = f.variance_floor;
    return cfg;
}

Dataset load_dataset(const std::string& path) { return dataset_from_json(read_json_file(path)); }
std::vector<DecodedSubject> load_decoded(const std::string& path) { return decoded_from_json(read_json_file(path)); }

int states_of(std::span<const DecodedSubject> decoded) {
    for (const auto& d : decoded)
        if (!d.visits.empty()) return static_cast<int>(d.visits.front().posterior.size());
    throw Error(Errc::EmptyInput, "decoded file holds no visits");
}

std::vector<DecodedSubject> restrict_to(std::span<const DecodedSubject> decoded, const Scope& scope) {
    std::vector<DecodedSubject> out;
    for (const auto& d : decoded)
        if (!scope || scope->count(d.subject_id)) out.push_back(d);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Disease-progression HMM analytics"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Sample a synthetic cohort from the reference model");
    int synth_states = 3;
    SynthOptions synth_opts;
    double synth_unit = 1.0;
    std::string synth_dir = ".";
    synth->add_option("--states", synth_states, "Generating number of states")->capture_default_str();
    synth->add_option("--subjects", synth_opts.n_subjects, "Number of subjects")->capture_default_str();
    synth->add_option("--visits", synth_opts.visits_per_subject, "Visits per subject")->capture_default_str();
    synth->add_option("--missing", synth_opts.missing_rate, "Probability a cell is missing")->capture_default_str();
    synth->add_option("--seed", synth_opts.seed, "Random seed")->capture_default_str();
    synth->add_option("--time-unit", synth_unit, "Months between visits")->capture_default_str();
    synth->add_option("--out-dir", synth_dir, "Directory for visits/statics/events CSV, schema.json, truth.json")
        ->capture_default_str();

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Validate CSV files into a dataset file");
    std::string in_visits, in_statics, in_events, in_schema, ingest_out;
    ingest->add_option("--visits", in_visits, "Visits CSV")->required();
    ingest->add_option("--statics", in_statics, "Static variables CSV");
    ingest->add_option("--events", in_events, "Outcome events CSV");
    ingest->add_option("--schema", in_schema, "Schema JSON")->required();
    ingest->add_option("--out", ingest_out, "Dataset JSON output (summary goes to stdout)");

    // train
    auto* train_cmd = app.add_subcommand("train", "Fit an HMM with EM");
    TrainFlags train_flags;
    std::string train_data, train_out;
    train_cmd->add_option("--data", train_data, "Dataset JSON")->required();
    add_train_flags(train_cmd, train_flags, true);
    train_cmd->add_option("--out", train_out, "Model JSON output");

    // cv
    auto* cv = app.add_subcommand("cv", "Cross-validate state counts by held-out log-likelihood");
    TrainFlags cv_flags;
    std::string cv_data, cv_states = "2..20", cv_out;
    int cv_folds = 5;
    cv->add_option("--data", cv_data, "Dataset JSON")->required();
    cv->add_option("--states", cv_states, "State counts, e.g. 2..20 or 2,3,5")->capture_default_str();
    cv->add_option("--folds", cv_folds, "Number of subject folds")->capture_default_str();
    add_train_flags(cv, cv_flags, false);
    cv->add_option("--out", cv_out, "CV table output");

    // decode
    auto* decode_cmd = app.add_subcommand("decode", "Viterbi labels and posteriors for every subject");
    std::string dec_data, dec_model, dec_out;
    decode_cmd->add_option("--data", dec_data, "Dataset JSON")->required();
    decode_cmd->add_option("--model", dec_model, "Model JSON")->required();
    decode_cmd->add_option("--out", dec_out, "Decoded JSON output");

    // mine
    auto* mine = app.add_subcommand("mine", "Closed frequent transition patterns (BIDE)");
    std::string mine_decoded, mine_out;
    int min_support = kDefaultMinSupport;
    std::size_t top = kDefaultTopPatterns;
    bool raw = false;
    mine->add_option("--decoded", mine_decoded, "Decoded JSON")->required();
    mine->add_option("--min-support", min_support, "Minimum number of subjects")->capture_default_str();
    mine->add_option("--top", top, "Keep the N best patterns")->capture_default_str();
    mine->add_flag("--raw", raw, "Mine raw labels instead of run-length-collapsed ones");
    mine->add_option("--out", mine_out, "Pattern list output");

    // query
    auto* query = app.add_subcommand("query", "Subjects matching a sequence query or filter");
    std::string q_file, q_decoded, q_data, q_out;
    query->add_option("--file", q_file, "SequenceQuery or FilterExpr JSON")->required();
    query->add_option("--decoded", q_decoded, "Decoded JSON (needed for state filters)");
    query->add_option("--data", q_data, "Dataset JSON (needed for static filters)");
    query->add_option("--out", q_out, "Output file");

    // subgroup
    auto* subgroup = app.add_subcommand("subgroup", "Create a named subgroup in a subgroup file");
    std::string sg_store = "subgroups.json", sg_name, sg_filter, sg_data, sg_decoded, sg_static;
    subgroup->add_option("--store", sg_store, "Subgroup file")->capture_default_str();
    subgroup->add_option("--name", sg_name, "Subgroup name");
    subgroup->add_option("--filter", sg_filter, "FilterExpr JSON file");
    subgroup->add_option("--from-static", sg_static, "Create one subgroup per value of this static variable");
    subgroup->add_option("--data", sg_data, "Dataset JSON")->required();
    subgroup->add_option("--decoded", sg_decoded, "Decoded JSON");

    // export-aggregates
    auto* agg = app.add_subcommand("export-aggregates", "Write every view aggregate as JSON");
    std::string agg_data, agg_decoded, agg_store = "subgroups.json", agg_dir = "aggregates";
    std::uint64_t agg_subgroup = 0;
    double agg_bin = 12.0;
    agg->add_option("--data", agg_data, "Dataset JSON")->required();
    agg->add_option("--decoded", agg_decoded, "Decoded JSON")->required();
    agg->add_option("--subgroup", agg_subgroup, "Subgroup id in --store (0 = everyone)");
    agg->add_option("--store", agg_store, "Subgroup file")->capture_default_str();
    agg->add_option("--bin", agg_bin, "Time bin in months")->capture_default_str();
    agg->add_option("--out-dir", agg_dir, "Output directory")->capture_default_str();

    // serve
    auto* serve = app.add_subcommand("serve", "Run the HTTP API");
    int port = 8080;
    std::string host = "127.0.0.1", data_dir, workspace_file;
    serve->add_option("--port", port, "Port")->capture_default_str();
    serve->add_option("--host", host, "Bind address")->capture_default_str();
    serve->add_option("--data-dir", data_dir, "Workspace directory (default $DPVIS_DATA_DIR or ./dpvis-data)");
    serve->add_option("--workspace-file", workspace_file, "Workspace state file (default <data-dir>/workspace.json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << Json{{"error", "InvalidArguments"}, {"message", e.what()}}.dump() << "\n";
        return 2;
    }

    try {
        if (*synth) {
            const auto truth = reference_model(synth_states, synth_unit);
            const auto ds = sample_dataset(truth, synth_opts);
            const fs::path dir(synth_dir);
            fs::create_directories(dir);
            export_csv(ds, {dir / "visits.csv", dir / "statics.csv", dir / "events.csv"});
            write_json_file(dir / "schema.json", to_json(ds.schema));
            write_json_file(dir / "truth.json", to_json(truth));
            emit(to_json(summarize(ds)), "");
        } else if (*ingest) {
            const auto schema = schema_from_json(read_json_file(in_schema));
            const auto ds = ingest_csv({in_visits, in_statics, in_events}, schema);
            if (!ingest_out.empty()) write_json_file(ingest_out, to_json(ds));
            emit(to_json(summarize(ds)), "");
        } else if (*train_cmd) {
            const auto ds = load_dataset(train_data);
            emit(to_json(train(ds, make_config(train_flags, train_flags.states, ds))), train_out);
        } else if (*cv) {
            const auto ds = load_dataset(cv_data);
            std::vector<HmmConfig> cfgs;
            for (int k : parse_states(cv_states)) cfgs.push_back(make_config(cv_flags, k, ds));
            const auto rows = cross_validate(ds, cfgs, cv_folds, cv_flags.seed);
            emit(to_json(std::span<const CvRow>(rows)), cv_out);
        } else if (*decode_cmd) {
            const auto ds = load_dataset(dec_data);
            const auto decoded = decode(model_from_json(read_json_file(dec_model)), ds);
            emit(to_json(std::span<const DecodedSubject>(decoded)), dec_out);
        } else if (*mine) {
            const auto decoded = load_decoded(mine_decoded);
            const auto patterns = mine_patterns(mining_sequences(decoded, !raw), min_support, top);
            emit(to_json(std::span<const MinedPattern>(patterns)), mine_out);
        } else if (*query) {
            const Json q = read_json_file(q_file);
            const auto decoded = q_decoded.empty() ? std::vector<DecodedSubject>{} : load_decoded(q_decoded);
            Dataset ds = q_data.empty() ? Dataset{} : load_dataset(q_data);
            if (q_data.empty())
                for (const auto& d : decoded) ds.subjects.push_back(Subject{d.subject_id, {}, {}, {}});
            const int K = decoded.empty() ? 0 : states_of(decoded);
            const FilterExpr f = q.is_object() && q.contains("type") ? filter_from_json(q) : FilterExpr{SequenceMatches{query_from_json(q)}};
            if (const auto* s = std::get_if<SequenceMatches>(&f.node)) validate(s->query, K);
            const auto members = evaluate(ds, decoded, K, f);
            emit(Json{{"filter", to_json(f)}, {"subjects", members}, {"count", members.size()}}, q_out);
        } else if (*subgroup) {
            const auto ds = load_dataset(sg_data);
            const auto decoded = sg_decoded.empty() ? std::vector<DecodedSubject>{} : load_decoded(sg_decoded);
            const int K = decoded.empty() ? 0 : states_of(decoded);
            const FilterEvaluator eval = [&](const FilterExpr& f) { return evaluate(ds, decoded, K, f); };
            SubgroupStore store(sg_store);
            Json created = Json::array();
            if (!sg_static.empty()) {
                for (const auto& g : store.import_from_static(ds, sg_static, eval)) created.push_back(to_json(g));
            } else {
                if (sg_name.empty() || sg_filter.empty())
                    throw Error(Errc::InvalidConfig, "subgroup needs --name and --filter, or --from-static");
                created.push_back(to_json(store.create(sg_name, filter_from_json(read_json_file(sg_filter)), eval)));
            }
            emit(Json{{"subgroups", created}}, "");
        } else if (*agg) {
            const auto ds = load_dataset(agg_data);
            const auto decoded = load_decoded(agg_decoded);
            const int K = states_of(decoded);
            Scope scope;
            if (agg_subgroup != 0) {
                const auto g = SubgroupStore(agg_store).get(agg_subgroup);
                scope = SubjectSet(g.members.begin(), g.members.end());
            }
            const fs::path dir(agg_dir);
            fs::create_directories(dir);
            write_json_file(dir / "features.json", to_json(feature_summary(ds, decoded, K, scope)));
            write_json_file(dir / "chord.json", to_json(chord_matrix(decoded, K, scope)));
            write_json_file(dir / "pathways_visit.json", to_json(sankey_by_visit(decoded, K, scope)));
            write_json_file(dir / "pathways_time.json", to_json(sankey_by_time(decoded, K, scope, agg_bin)));
            write_json_file(dir / "waterfall.json", to_json(waterfall(decoded, scope)));
            const auto chosen = restrict_to(decoded, scope);
            const auto patterns = mine_patterns(mining_sequences(chosen), kDefaultMinSupport, kDefaultTopPatterns);
            write_json_file(dir / "patterns.json", to_json(std::span<const MinedPattern>(patterns)));
            for (const auto& event : ds.variable_names(VarRole::OutcomeEvent)) {
                write_json_file(dir / ("pathways_bipartite_" + event + ".json"), to_json(bipartite(ds, decoded, K, scope, event)));
                try {
                    write_json_file(dir / ("kde_" + event + ".json"), to_json(event_density(ds, event, scope)));
                } catch (const Error& e) {
                    if (e.code() != Errc::EmptyAges) throw;
                }
            }
            Json files = Json::array();
            for (const auto& entry : fs::directory_iterator(dir)) files.push_back(entry.path().filename().string());
            std::sort(files.begin(), files.end());
            emit(Json{{"out_dir", dir.string()}, {"files", files}}, "");
        } else if (*serve) {
            if (data_dir.empty()) {
                const char* env = std::getenv("DPVIS_DATA_DIR");
                data_dir = env && *env ? env : "dpvis-data";
            }
            Service service({data_dir, workspace_file});
            std::cerr << "listening on " << host << ":" << port << "\n";
            if (!service.listen(host, port)) throw Error(Errc::Io, "cannot listen on " + host + ":" + std::to_string(port));
        }
    } catch (const std::exception& e) {
        std::cerr << error_json(e).dump() << "\n";
        return 1;
    }
    return 0;
}
