#include "pme/cli.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "pme/curvature.hpp"
#include "pme/io.hpp"
#include "pme/kg.hpp"
#include "pme/metrics.hpp"
#include "pme/recon.hpp"

namespace pme::cli {

namespace {

using nlohmann::json;

const OptionSpec kGen[] = {
    {"kind", nullptr, OptKind::String, nullptr, "graph family: cycle | tree | ring_of_trees"},
    {"n", nullptr, OptKind::Int, "40", "node count (cycle/tree; truncation for ring_of_trees)"},
    {"branching", nullptr, OptKind::Int, "2", "tree branching factor"},
    {"ring", nullptr, OptKind::Int, "8", "ring size for ring_of_trees"},
    {"depth", nullptr, OptKind::Int, "2", "tree depth for ring_of_trees"},
    {"out", nullptr, OptKind::String, nullptr, "output edge-list path"},
};

const OptionSpec kCurvature[] = {
    {"graph", nullptr, OptKind::String, nullptr, "input edge-list path"},
    {"budget", nullptr, OptKind::Int, "500", "reference-node sample budget per neighbor pair"},
    {"seed", nullptr, OptKind::Uint64, "0", "sampling seed"},
    {"suggest_dim", nullptr, OptKind::Int, "10", "total intrinsic dimension for the suggested signature"},
    {"out", nullptr, OptKind::String, "", "output JSON path (stdout when empty)"},
};

const OptionSpec kRecon[] = {
    {"graph", nullptr, OptKind::String, nullptr, "input edge-list path"},
    {"sig", nullptr, OptKind::String, nullptr, "signature string, e.g. h2,s1"},
    {"out", nullptr, OptKind::String, nullptr, "output directory"},
    {"config", nullptr, OptKind::String, "", "flat JSON config file merged beneath flags"},
    {"apsp_cache", nullptr, OptKind::Bool, "false", "cache shortest paths in a sidecar file"},
    {"opt.seed", "seed", OptKind::Uint64, "0", "run seed"},
    {"opt.lr", nullptr, OptKind::Double, "0.1", "R-SGD learning rate"},
    {"opt.epochs", nullptr, OptKind::Int, "0", "epochs (0 = 1000 for n<=100, else 300)"},
    {"opt.clip", nullptr, OptKind::Double, "1.0", "per-component tangent gradient clip"},
    {"opt.burnin", nullptr, OptKind::Int, "10", "epochs at lr/10"},
    {"opt.batch", nullptr, OptKind::Int, "10000", "pairs per epoch"},
    {"opt.lambda_lr", nullptr, OptKind::Double, "0.05", "learning rate of the global metric scale"},
    {"opt.init_scale", nullptr, OptKind::Double, "0.1", "std of the Gaussian init tangent"},
    {"gating.enabled", nullptr, OptKind::Bool, "true", "learn component weights from topology"},
    {"gating.period", nullptr, OptKind::Int, "5", "epochs between gating updates"},
    {"gating.levels", nullptr, OptKind::Int, "1", "pooling levels"},
    {"gating.hidden", nullptr, OptKind::Int, "16", "GNN hidden width"},
    {"gating.heads", nullptr, OptKind::Int, "4", "attention heads (must divide node count)"},
    {"gating.aux_weight", nullptr, OptKind::Double, "1.0", "weight of L_LP + L_e"},
    {"gating.lr", nullptr, OptKind::Double, "0.01", "Adam learning rate for gating parameters"},
    {"gating.feature_budget", nullptr, OptKind::Int, "64", "curvature sample budget for node features"},
};

const OptionSpec kEval[] = {
    {"graph", nullptr, OptKind::String, nullptr, "input edge-list path"},
    {"checkpoint", nullptr, OptKind::String, nullptr, "checkpoint produced by recon"},
    {"out", nullptr, OptKind::String, nullptr, "output directory"},
};

const OptionSpec kKgTrain[] = {
    {"data", nullptr, OptKind::String, nullptr, "directory with train.txt/valid.txt/test.txt"},
    {"sig", nullptr, OptKind::String, "", "signature string (empty = suggest from curvature)"},
    {"suggest_dim", nullptr, OptKind::Int, "64", "total intrinsic dim when suggesting the signature"},
    {"out", nullptr, OptKind::String, nullptr, "output directory"},
    {"config", nullptr, OptKind::String, "", "flat JSON config file merged beneath flags"},
    {"opt.seed", "seed", OptKind::Uint64, "0", "run seed"},
    {"opt.lr", nullptr, OptKind::Double, "0.2", "entity R-SGD learning rate"},
    {"opt.epochs", nullptr, OptKind::Int, "200", "training epochs"},
    {"opt.clip", nullptr, OptKind::Double, "1.0", "per-component tangent gradient clip"},
    {"opt.burnin", nullptr, OptKind::Int, "10", "epochs at lr/10"},
    {"kg.batch", nullptr, OptKind::Int, "512", "positives per batch (0 = full split)"},
    {"kg.n_neg", nullptr, OptKind::Int, "2", "negatives per positive"},
    {"kg.adam_lr", nullptr, OptKind::Double, "0.05", "Adam learning rate for relation parameters"},
    {"kg.use_offset", nullptr, OptKind::Bool, "true", "learn a per-relation score offset"},
    {"kg.init_scale", nullptr, OptKind::Double, "0.1", "entity init spread"},
    {"kg.gating_weights", nullptr, OptKind::Bool, "true", "derive s by gating the entity graph"},
    {"kg.eval_k", nullptr, OptKind::Int, "3", "k of the hit rate reported after training"},
    {"kg.filtered", nullptr, OptKind::Bool, "true", "filtered ranking (raw when false)"},
    {"gating.levels", nullptr, OptKind::Int, "1", "pooling levels"},
    {"gating.hidden", nullptr, OptKind::Int, "16", "GNN hidden width"},
    {"gating.heads", nullptr, OptKind::Int, "4", "attention heads"},
    {"gating.aux_weight", nullptr, OptKind::Double, "1.0", "weight of L_LP + L_e"},
    {"gating.feature_budget", nullptr, OptKind::Int, "64", "curvature sample budget for node features"},
};

const OptionSpec kKgEval[] = {
    {"data", nullptr, OptKind::String, nullptr, "directory with train.txt/valid.txt/test.txt"},
    {"checkpoint", nullptr, OptKind::String, nullptr, "checkpoint produced by kg train"},
    {"out", nullptr, OptKind::String, "", "output directory (stdout summary when empty)"},
    {"kg.eval_k", nullptr, OptKind::Int, "3", "k of the hit rate"},
    {"kg.filtered", nullptr, OptKind::Bool, "true", "filtered ranking (raw when false)"},
};

struct SchemaEntry {
    const char* name;
    std::span<const OptionSpec> opts;
};

const SchemaEntry kSchemas[] = {
    {"gen", kGen}, {"curvature", kCurvature}, {"recon", kRecon},
    {"eval", kEval}, {"kg train", kKgTrain}, {"kg eval", kKgEval},
};

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::span<const OptionSpec> schema_for(const std::string& subcommand) {
    for (const auto& s : kSchemas)
        if (subcommand == s.name) return s.opts;
    throw usage_error("unknown subcommand '" + subcommand + "'");
}

std::vector<std::string> subcommand_names() {
    std::vector<std::string> out;
    for (const auto& s : kSchemas) out.push_back(s.name);
    return out;
}

const std::string& RunConfig::str(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) throw usage_error("missing config key '" + key + "'");
    return it->second;
}

long long RunConfig::integer(const std::string& key) const {
    const std::string& v = str(key);
    try {
        std::size_t pos = 0;
        const long long r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return r;
    } catch (const std::exception&) {
        throw usage_error("config key '" + key + "': expected integer, got '" + v + "'");
    }
}

double RunConfig::real(const std::string& key) const {
    const std::string& v = str(key);
    try {
        std::size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return r;
    } catch (const std::exception&) {
        throw usage_error("config key '" + key + "': expected number, got '" + v + "'");
    }
}

bool RunConfig::flag(const std::string& key) const {
    const std::string& v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw usage_error("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::uint64_t RunConfig::uint(const std::string& key) const {
    const std::string& v = str(key);
    try {
        std::size_t pos = 0;
        const unsigned long long r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return r;
    } catch (const std::exception&) {
        throw usage_error("config key '" + key + "': expected unsigned integer, got '" + v + "'");
    }
}

namespace {

const OptionSpec* find_spec(std::span<const OptionSpec> schema, const std::string& name) {
    for (const auto& o : schema)
        if (name == o.key || (o.alias && name == o.alias)) return &o;
    return nullptr;
}

}  // namespace

RunConfig resolve_config(const std::string& subcommand, std::span<const std::string> args) {
    const auto schema = schema_for(subcommand);
    RunConfig cfg;
    cfg.subcommand = subcommand;
    for (const auto& o : schema)
        if (o.def) cfg.values[o.key] = o.def;

    std::map<std::string, std::string> from_flags;
    for (std::size_t i = 0; i < args.size(); ++i) {
        std::string arg = args[i];
        if (arg.rfind("--", 0) != 0) throw usage_error("expected a --flag, got '" + arg + "'");
        arg.erase(0, 2);
        std::string value;
        const auto eq = arg.find('=');
        if (eq != std::string::npos) {
            value = arg.substr(eq + 1);
            arg.resize(eq);
        } else {
            if (i + 1 >= args.size()) throw usage_error("flag '--" + arg + "' needs a value");
            value = args[++i];
        }
        const OptionSpec* spec = find_spec(schema, arg);
        if (!spec) throw usage_error("unknown flag '--" + arg + "' for subcommand '" + subcommand + "'");
        from_flags[spec->key] = value;
    }

    // Config file keys apply beneath explicit flags.
    auto file_it = from_flags.find("config");
    std::string config_path;
    if (file_it != from_flags.end()) config_path = file_it->second;
    else if (cfg.values.count("config")) config_path = cfg.values["config"];
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw io_error("cannot open config file: " + config_path);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw usage_error("config file " + config_path + ": " + e.what());
        }
        if (!j.is_object()) throw usage_error("config file must hold a flat JSON object");
        for (const auto& [key, val] : j.items()) {
            const OptionSpec* spec = find_spec(schema, key);
            if (!spec) throw usage_error("config file key '" + key + "' unknown for subcommand '" + subcommand + "'");
            if (from_flags.count(spec->key)) continue;  // flags win
            std::string text;
            if (val.is_string()) text = val.get<std::string>();
            else if (val.is_boolean()) text = val.get<bool>() ? "true" : "false";
            else if (val.is_number_integer()) text = std::to_string(val.get<long long>());
            else if (val.is_number()) text = fmt_double(val.get<double>());
            else throw usage_error("config file key '" + key + "' must be a scalar");
            cfg.values[spec->key] = text;
        }
    }
    for (const auto& [k, v] : from_flags) cfg.values[k] = v;

    for (const auto& o : schema)
        if (!o.def && !cfg.values.count(o.key))
            throw usage_error("subcommand '" + subcommand + "' requires --" + std::string(o.key));
    return cfg;
}

std::string help_text(const std::string& subcommand) {
    std::ostringstream out;
    if (subcommand.empty()) {
        out << kBuildId << " - graph embedding in weighted products of constant-curvature spaces\n\n"
            << "usage: pmembed <subcommand> [--key value ...]\n\nsubcommands:\n";
        out << "  gen        generate a synthetic graph (cycle, tree, ring of trees)\n";
        out << "  curvature  estimate sectional curvature and suggest a signature\n";
        out << "  recon      train a graph reconstruction embedding\n";
        out << "  eval       evaluate a saved embedding checkpoint\n";
        out << "  kg train   train a knowledge-graph embedding\n";
        out << "  kg eval    evaluate a knowledge-graph checkpoint\n";
        out << "\nRun pmembed <subcommand> --help for the accepted keys.\n";
        return out.str();
    }
    out << "usage: pmembed " << subcommand << " [--key value ...]\n\nkeys (also accepted via --config JSON):\n";
    for (const auto& o : schema_for(subcommand)) {
        out << "  --" << o.key;
        if (o.alias) out << " (alias --" << o.alias << ")";
        if (o.def) {
            if (*o.def) out << " [default " << o.def << "]";
        } else {
            out << " (required)";
        }
        out << "\n      " << o.help << "\n";
    }
    return out.str();
}

namespace {

json config_json(const RunConfig& cfg) {
    json j = json::object();
    for (const auto& o : schema_for(cfg.subcommand)) {
        const auto it = cfg.values.find(o.key);
        if (it == cfg.values.end()) continue;
        switch (o.kind) {
            case OptKind::String: j[o.key] = it->second; break;
            case OptKind::Int: j[o.key] = cfg.integer(o.key); break;
            case OptKind::Double: j[o.key] = cfg.real(o.key); break;
            case OptKind::Bool: j[o.key] = cfg.flag(o.key); break;
            case OptKind::Uint64: j[o.key] = cfg.uint(o.key); break;
        }
    }
    return j;
}

json graph_json(const Graph& g, const std::string& path) {
    return json{{"path", path},
                {"name", g.name},
                {"nodes", g.n},
                {"edges", g.edge_count()},
                {"dropped_self_loops", g.dropped_self_loops},
                {"dropped_duplicates", g.dropped_duplicates}};
}

void write_json(const std::string& path, const json& j) { atomic_write_text(path, j.dump(2) + "\n"); }

void append_summary_row(const std::string& dir, const std::map<std::string, std::string>& fields) {
    static const char* kColumns[] = {"subcommand", "graph",       "signature", "seed", "epochs", "d_avg",
                                     "map",        "mrr",         "hr",        "final_scale", "pairs_used",
                                     "wall_seconds"};
    const std::string path = dir + "/summary.csv";
    std::string content;
    {
        std::ifstream in(path);
        if (in) content.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    if (content.empty()) {
        for (std::size_t i = 0; i < std::size(kColumns); ++i) {
            if (i) content += ',';
            content += kColumns[i];
        }
        content += '\n';
    }
    for (std::size_t i = 0; i < std::size(kColumns); ++i) {
        if (i) content += ',';
        const auto it = fields.find(kColumns[i]);
        if (it != fields.end()) content += it->second;
    }
    content += '\n';
    atomic_write_text(path, content);
}

DistanceMatrix load_or_compute_apsp(const Graph& g, const std::string& graph_path, bool use_cache) {
    if (use_cache) {
        const std::string cache = distance_cache_path(graph_path, g);
        if (std::filesystem::exists(cache)) {
            DistanceMatrix d = load_distance_cache(cache);
            if (d.n == g.n) return d;
        }
        DistanceMatrix d = apsp(g);
        save_distance_cache(cache, d);
        return d;
    }
    return apsp(g);
}

std::uint64_t recon_checkpoint_hash(const Graph& g, const std::string& sig_text) {
    const std::uint64_t gh = graph_content_hash(g);
    return fnv1a(fnv1a(0, &gh, sizeof gh), sig_text);
}

int run_gen(const RunConfig& cfg) {
    const std::string kind = cfg.str("kind");
    Graph g;
    if (kind == "cycle") {
        g = generate_cycle(static_cast<int>(cfg.integer("n")));
    } else if (kind == "tree") {
        g = generate_tree(static_cast<int>(cfg.integer("branching")), static_cast<int>(cfg.integer("n")));
    } else if (kind == "ring_of_trees") {
        g = generate_ring_of_trees(static_cast<int>(cfg.integer("ring")), static_cast<int>(cfg.integer("branching")),
                                   static_cast<int>(cfg.integer("depth")), static_cast<int>(cfg.integer("n")));
    } else {
        throw usage_error("gen: unknown kind '" + kind + "' (cycle | tree | ring_of_trees)");
    }
    std::ostringstream body;
    for (int u = 0; u < g.n; ++u)
        for (int v : g.neighbors(u))
            if (u < v) body << u << '\t' << v << '\n';
    atomic_write_text(cfg.str("out"), body.str());
    std::cout << "wrote " << cfg.str("out") << ": " << g.n << " nodes, " << g.edge_count() << " edges\n";
    return 0;
}

int run_curvature(const RunConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const Graph g = load_edge_list(cfg.str("graph"));
    const DistanceMatrix dist = apsp(g);
    const CurvatureSummary s =
        curvature_summary(g, dist, static_cast<int>(cfg.integer("budget")), cfg.uint("seed"));
    const std::string suggested = suggest_signature(s, static_cast<int>(cfg.integer("suggest_dim")));

    json j{{"subcommand", "curvature"},
           {"build", kBuildId},
           {"config", config_json(cfg)},
           {"graph", graph_json(g, cfg.str("graph"))},
           {"fractions",
            {{"negative", s.frac_negative}, {"near_zero", s.frac_near_zero}, {"positive", s.frac_positive}}},
           {"near_zero_split",
            {{"negative", s.near_negative}, {"exact_zero", s.near_exact_zero}, {"positive", s.near_positive}}},
           {"histogram", {{"lo", s.hist_lo}, {"hi", s.hist_hi}, {"counts", s.histogram}}},
           {"nodes_counted", s.nodes_counted},
           {"nodes_skipped", s.nodes_skipped},
           {"budget", s.budget},
           {"samples", s.samples},
           {"suggested_signature", suggested}};
    j["timing"] = {{"total_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
    const std::string out = cfg.str("out");
    if (out.empty())
        std::cout << j.dump(2) << "\n";
    else
        write_json(out, j);
    return 0;
}

int run_recon(const RunConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    parse_signature(cfg.str("sig"));  // reject malformed signatures before any I/O
    const std::string graph_path = cfg.str("graph");
    const Graph g = load_edge_list(graph_path);
    const DistanceMatrix dist = load_or_compute_apsp(g, graph_path, cfg.flag("apsp_cache"));

    const std::string out = cfg.str("out");
    std::filesystem::create_directories(out);

    ReconConfig rc;
    rc.signature = cfg.str("sig");
    rc.gating_enabled = cfg.flag("gating.enabled");
    rc.opt.lr = cfg.real("opt.lr");
    rc.opt.epochs = static_cast<int>(cfg.integer("opt.epochs"));
    rc.opt.clip = cfg.real("opt.clip");
    rc.opt.burnin = static_cast<int>(cfg.integer("opt.burnin"));
    rc.lambda_lr = cfg.real("opt.lambda_lr");
    rc.gating_lr = cfg.real("gating.lr");
    rc.gating.levels = static_cast<int>(cfg.integer("gating.levels"));
    rc.gating.hidden = static_cast<int>(cfg.integer("gating.hidden"));
    rc.gating.heads = static_cast<int>(cfg.integer("gating.heads"));
    rc.gating.aux_weight = cfg.real("gating.aux_weight");
    rc.gating.feature_budget = static_cast<int>(cfg.integer("gating.feature_budget"));
    rc.gating_period = static_cast<int>(cfg.integer("gating.period"));
    rc.batch_pairs = static_cast<int>(cfg.integer("opt.batch"));
    rc.init_scale = cfg.real("opt.init_scale");
    rc.seed = cfg.uint("opt.seed");
    rc.abort_checkpoint_path = out + "/checkpoint_lastgood.bin";

    const TrainResult res = train_reconstruction(g, dist, rc);

    // trace.csv: epoch, L_base, L_LP, L_e, s1..sN
    std::ostringstream trace;
    trace << "epoch,L_base,L_LP,L_e";
    for (int k = 0; k < res.sig.count(); ++k) trace << ",s" << (k + 1);
    trace << '\n';
    for (const TraceRow& row : res.report.trace) {
        trace << row.epoch << ',' << fmt_double(row.l_base) << ',' << fmt_double(row.l_lp) << ','
              << fmt_double(row.l_e);
        for (double w : row.weights) trace << ',' << fmt_double(w);
        trace << '\n';
    }
    atomic_write_text(out + "/trace.csv", trace.str());

    save_checkpoint(out + "/checkpoint.bin", res.sig, res.points, res.has_gating ? &res.gating : nullptr,
                    recon_checkpoint_hash(g, res.sig.to_string()));

    json j{{"subcommand", "recon"},
           {"build", kBuildId},
           {"config", config_json(cfg)},
           {"graph", graph_json(g, graph_path)},
           {"signature", res.sig.to_string()},
           {"final_weights", res.report.final_weights},
           {"final_scale", res.report.final_scale},
           {"seed", res.report.seed},
           {"epochs", res.report.epochs},
           {"eval",
            {{"d_avg", res.report.eval.d_avg},
             {"map", res.report.eval.map},
             {"pairs_used", res.report.eval.pairs_used},
             {"pairs_sampled", res.report.eval.pairs_sampled}}},
           {"clipped_steps", res.report.clipped_steps},
           {"skipped_nonfinite", res.report.skipped_nonfinite},
           {"files", {{"trace", "trace.csv"}, {"checkpoint", "checkpoint.bin"}, {"summary", "summary.csv"}}}};
    j["timing"] = {{"train_seconds", res.report.wall_seconds},
                   {"eval_seconds", res.report.eval.wall_seconds},
                   {"total_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
    write_json(out + "/report.json", j);

    append_summary_row(out, {{"subcommand", "recon"},
                             {"graph", g.name},
                             {"signature", res.sig.to_string()},
                             {"seed", std::to_string(res.report.seed)},
                             {"epochs", std::to_string(res.report.epochs)},
                             {"d_avg", fmt_double(res.report.eval.d_avg)},
                             {"map", fmt_double(res.report.eval.map)},
                             {"final_scale", fmt_double(res.report.final_scale)},
                             {"pairs_used", std::to_string(res.report.eval.pairs_used)},
                             {"wall_seconds", fmt_double(res.report.wall_seconds)}});
    std::cout << "recon done: D_avg=" << res.report.eval.d_avg << " mAP=" << res.report.eval.map
              << " weights=" << json(res.report.final_weights).dump() << " scale=" << res.report.final_scale << "\n";
    return 0;
}

int run_eval(const RunConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string graph_path = cfg.str("graph");
    const Graph g = load_edge_list(graph_path);
    const Checkpoint ck = load_checkpoint(cfg.str("checkpoint"));
    const std::uint64_t expect = recon_checkpoint_hash(g, ck.sig.to_string());
    if (ck.config_hash != expect)
        throw io_error("checkpoint config hash mismatch: it was trained on a different graph or signature");
    if (ck.points.n != g.n) throw usage_error("checkpoint holds " + std::to_string(ck.points.n) + " points, graph has " +
                                              std::to_string(g.n) + " nodes");
    const DistanceMatrix dist = apsp(g);
    const EvalReport rep = evaluate_embedding(g, dist, ck.sig, ck.points);

    const std::string out = cfg.str("out");
    std::filesystem::create_directories(out);
    json j{{"subcommand", "eval"},
           {"build", kBuildId},
           {"config", config_json(cfg)},
           {"graph", graph_json(g, graph_path)},
           {"signature", ck.sig.to_string()},
           {"weights", ck.sig.weights},
           {"scale", ck.sig.scale},
           {"eval",
            {{"d_avg", rep.d_avg}, {"map", rep.map}, {"pairs_used", rep.pairs_used}, {"pairs_sampled", rep.pairs_sampled}}}};
    j["timing"] = {{"eval_seconds", rep.wall_seconds},
                   {"total_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
    write_json(out + "/report.json", j);
    append_summary_row(out, {{"subcommand", "eval"},
                             {"graph", g.name},
                             {"signature", ck.sig.to_string()},
                             {"d_avg", fmt_double(rep.d_avg)},
                             {"map", fmt_double(rep.map)},
                             {"final_scale", fmt_double(ck.sig.scale)},
                             {"pairs_used", std::to_string(rep.pairs_used)},
                             {"wall_seconds", fmt_double(rep.wall_seconds)}});
    std::cout << "eval done: D_avg=" << rep.d_avg << " mAP=" << rep.map << "\n";
    return 0;
}

std::uint64_t kg_checkpoint_hash(const TripleStore& store, const std::string& sig_text) {
    std::uint64_t h = fnv1a(0, sig_text);
    const int e = store.entity_count(), r = store.relation_count();
    h = fnv1a(h, &e, sizeof e);
    h = fnv1a(h, &r, sizeof r);
    return h;
}

int run_kg_train(const RunConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    if (!cfg.str("sig").empty()) parse_signature(cfg.str("sig"));
    const TripleStore store = load_triples(cfg.str("data"));

    std::string sig_text = cfg.str("sig");
    std::string suggested_from;
    if (sig_text.empty()) {
        const Graph eg = entity_graph(store);
        const DistanceMatrix dist = apsp(eg);
        const CurvatureSummary s = curvature_summary(eg, dist, 200, cfg.uint("opt.seed"));
        sig_text = suggest_signature(s, static_cast<int>(cfg.integer("suggest_dim")));
        suggested_from = "curvature probe";
    }
    const Signature sig = parse_signature(sig_text);

    KgConfig kc;
    kc.epochs = static_cast<int>(cfg.integer("opt.epochs"));
    kc.batch = static_cast<int>(cfg.integer("kg.batch"));
    kc.n_neg = static_cast<int>(cfg.integer("kg.n_neg"));
    kc.use_offset = cfg.flag("kg.use_offset");
    kc.filtered_eval = cfg.flag("kg.filtered");
    kc.eval_k = static_cast<int>(cfg.integer("kg.eval_k"));
    kc.opt.lr = cfg.real("opt.lr");
    kc.opt.clip = cfg.real("opt.clip");
    kc.opt.burnin = static_cast<int>(cfg.integer("opt.burnin"));
    kc.adam_lr = cfg.real("kg.adam_lr");
    kc.init_scale = cfg.real("kg.init_scale");
    kc.gating_weights = cfg.flag("kg.gating_weights");
    kc.gating.levels = static_cast<int>(cfg.integer("gating.levels"));
    kc.gating.hidden = static_cast<int>(cfg.integer("gating.hidden"));
    kc.gating.heads = static_cast<int>(cfg.integer("gating.heads"));
    kc.gating.aux_weight = cfg.real("gating.aux_weight");
    kc.gating.feature_budget = static_cast<int>(cfg.integer("gating.feature_budget"));
    kc.seed = cfg.uint("opt.seed");

    const KgTrainResult res = train_kg(store, sig, kc);
    const KgEval eval = evaluate_kg(res.params, store, kc.eval_k, kc.filtered_eval);

    const std::string out = cfg.str("out");
    std::filesystem::create_directories(out);

    std::ostringstream trace;
    trace << "epoch,loss\n";
    for (std::size_t e = 0; e < res.report.loss_trace.size(); ++e)
        trace << (e + 1) << ',' << fmt_double(res.report.loss_trace[e]) << '\n';
    atomic_write_text(out + "/trace.csv", trace.str());

    save_kg_checkpoint(out + "/checkpoint.bin", res.params, kg_checkpoint_hash(store, sig_text));

    json j{{"subcommand", "kg train"},
           {"build", kBuildId},
           {"config", config_json(cfg)},
           {"data",
            {{"path", cfg.str("data")},
             {"entities", store.entity_count()},
             {"relations", store.relation_count()},
             {"train", store.train.size()},
             {"valid", store.valid.size()},
             {"test", store.test.size()},
             {"test_train_duplicates", store.test_train_duplicates},
             {"unseen_test_entities", store.unseen_test_entities}}},
           {"signature", sig_text},
           {"signature_source", suggested_from.empty() ? "flag" : suggested_from},
           {"weights", res.report.weights},
           {"gating_used", res.report.gating_used},
           {"seed", kc.seed},
           {"epochs", kc.epochs},
           {"final_loss", res.report.loss_trace.empty() ? 0.0 : res.report.loss_trace.back()},
           {"eval", {{"mrr", eval.mrr}, {"hit_rate", eval.hit_rate}, {"k", eval.k}, {"ranks", eval.ranks},
                     {"filtered", kc.filtered_eval}}},
           {"files", {{"trace", "trace.csv"}, {"checkpoint", "checkpoint.bin"}, {"summary", "summary.csv"}}}};
    j["timing"] = {{"train_seconds", res.report.wall_seconds},
                   {"total_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
    write_json(out + "/report.json", j);

    append_summary_row(out, {{"subcommand", "kg train"},
                             {"graph", cfg.str("data")},
                             {"signature", sig_text},
                             {"seed", std::to_string(kc.seed)},
                             {"epochs", std::to_string(kc.epochs)},
                             {"mrr", fmt_double(eval.mrr)},
                             {"hr", fmt_double(eval.hit_rate)},
                             {"wall_seconds", fmt_double(res.report.wall_seconds)}});
    std::cout << "kg train done: MRR=" << eval.mrr << " HR@" << eval.k << "=" << eval.hit_rate << "\n";
    return 0;
}

int run_kg_eval(const RunConfig& cfg) {
    const TripleStore store = load_triples(cfg.str("data"));
    const KgCheckpoint ck = load_kg_checkpoint(cfg.str("checkpoint"));
    if (ck.config_hash != kg_checkpoint_hash(store, ck.params.sig.to_string()))
        throw io_error("kg checkpoint config hash mismatch: it was trained on different data or signature");
    const int k = static_cast<int>(cfg.integer("kg.eval_k"));
    const KgEval eval = evaluate_kg(ck.params, store, k, cfg.flag("kg.filtered"));
    json j{{"subcommand", "kg eval"},
           {"build", kBuildId},
           {"config", config_json(cfg)},
           {"signature", ck.params.sig.to_string()},
           {"eval", {{"mrr", eval.mrr}, {"hit_rate", eval.hit_rate}, {"k", eval.k}, {"ranks", eval.ranks},
                     {"filtered", cfg.flag("kg.filtered")}}}};
    const std::string out = cfg.str("out");
    if (out.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        std::filesystem::create_directories(out);
        write_json(out + "/report.json", j);
        append_summary_row(out, {{"subcommand", "kg eval"},
                                 {"graph", cfg.str("data")},
                                 {"signature", ck.params.sig.to_string()},
                                 {"mrr", fmt_double(eval.mrr)},
                                 {"hr", fmt_double(eval.hit_rate)}});
    }
    return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
    try {
        if (args.empty() || args[0] == "--help" || args[0] == "help") {
            std::cout << help_text("");
            return args.empty() ? 1 : 0;
        }
        std::string sub = args[0];
        std::size_t skip = 1;
        if (sub == "kg") {
            if (args.size() < 2) throw usage_error("kg needs 'train' or 'eval'");
            sub = "kg " + args[1];
            skip = 2;
        }
        std::vector<std::string> rest(args.begin() + skip, args.end());
        if (!rest.empty() && (rest[0] == "--help" || rest[0] == "help")) {
            std::cout << help_text(sub);
            return 0;
        }
        const RunConfig cfg = resolve_config(sub, rest);
        if (sub == "gen") return run_gen(cfg);
        if (sub == "curvature") return run_curvature(cfg);
        if (sub == "recon") return run_recon(cfg);
        if (sub == "eval") return run_eval(cfg);
        if (sub == "kg train") return run_kg_train(cfg);
        if (sub == "kg eval") return run_kg_eval(cfg);
        throw usage_error("unknown subcommand '" + sub + "'");
    } catch (const usage_error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace pme::cli
