// Command-line front end: generate / train / eval / gradcheck.
//
// Configuration is a flat key=value file; --set overrides file values and the
// dedicated flags (--seed, --out, --arch, ...) override both. The fully
// resolved configuration is echoed into the output directory as config.echo
// so every run is reproducible from its artifacts alone.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "seqcls/checkpoint.hpp"
#include "seqcls/csv_io.hpp"
#include "seqcls/data.hpp"
#include "seqcls/gradcheck.hpp"
#include "seqcls/model.hpp"
#include "seqcls/rng.hpp"
#include "seqcls/synth.hpp"
#include "seqcls/train.hpp"

namespace fs = std::filesystem;
using namespace seqcls;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerification = 3;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

struct RunConfig {
    std::string arch = "transformer";
    // generator
    std::size_t n_scenarios = 200;
    std::size_t seq_len = 200;
    double damage_fraction = 0.616;
    double noise_scale = 0.03;
    std::string schema;  // comma-separated variable names; empty = full standard set
    // model
    std::size_t n_layers = 2;
    std::size_t d_model = 30;
    std::size_t n_heads = 1;
    std::size_t ffn_dim = 0;  // 0 = 4 * d_model
    std::string pooling = "mean";
    bool positional_encoding = true;
    std::size_t kernel_width = 11;
    // training
    double learning_rate = 0.001;
    std::size_t batch_size = 12;
    std::size_t epochs = 1;
    std::string optimizer = "sgd";
    double clip_epsilon = 1e-12;
    // run plumbing
    std::uint64_t seed = 42;
    std::string out = "run-out";
    std::string manifest;
    std::string checkpoint;
    std::string split_file;
    bool strict_schema = false;
    // verification
    std::size_t gradcheck_seeds = 20;

    void set(const std::string& key, const std::string& raw);
    std::string echo() const;
};

std::size_t parse_size(const std::string& key, const std::string& v) {
    try {
        const long long n = std::stoll(v);
        if (n < 0) throw std::out_of_range("negative");
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad count '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad integer '" + v + "'");
    }
}

double parse_real(const std::string& key, const std::string& v) {
    try {
        return parse_double(v, "config key '" + key + "'");
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    }
}

bool parse_flag(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "on") return true;
    if (v == "0" || v == "false" || v == "off") return false;
    throw ConfigError("config key '" + key + "': bad boolean '" + v + "' (use 0|1)");
}

void RunConfig::set(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    if (key == "arch") arch = v;
    else if (key == "n_scenarios") n_scenarios = parse_size(key, v);
    else if (key == "seq_len") seq_len = parse_size(key, v);
    else if (key == "damage_fraction") damage_fraction = parse_real(key, v);
    else if (key == "noise_scale") noise_scale = parse_real(key, v);
    else if (key == "schema") schema = v;
    else if (key == "n_layers") n_layers = parse_size(key, v);
    else if (key == "d_model") d_model = parse_size(key, v);
    else if (key == "n_heads") n_heads = parse_size(key, v);
    else if (key == "ffn_dim") ffn_dim = parse_size(key, v);
    else if (key == "pooling") pooling = v;
    else if (key == "positional_encoding") positional_encoding = parse_flag(key, v);
    else if (key == "kernel_width") kernel_width = parse_size(key, v);
    else if (key == "learning_rate") learning_rate = parse_real(key, v);
    else if (key == "batch_size") batch_size = parse_size(key, v);
    else if (key == "epochs") epochs = parse_size(key, v);
    else if (key == "optimizer") optimizer = v;
    else if (key == "clip_epsilon") clip_epsilon = parse_real(key, v);
    else if (key == "seed") seed = parse_u64(key, v);
    else if (key == "out") out = v;
    else if (key == "manifest") manifest = v;
    else if (key == "checkpoint") checkpoint = v;
    else if (key == "split") split_file = v;
    else if (key == "strict_schema") strict_schema = parse_flag(key, v);
    else if (key == "gradcheck_seeds") gradcheck_seeds = parse_size(key, v);
    else throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::string> resolve_schema(const std::string& schema) {
    if (trim(schema).empty()) return standard_schema();
    std::vector<std::string> names;
    std::stringstream ss(schema);
    std::string item;
    while (std::getline(ss, item, ',')) names.push_back(trim(item));
    return names;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string RunConfig::echo() const {
    std::ostringstream o;
    o << "arch=" << arch << "\n";
    o << "n_scenarios=" << n_scenarios << "\n";
    o << "seq_len=" << seq_len << "\n";
    o << "damage_fraction=" << format_double(damage_fraction) << "\n";
    o << "noise_scale=" << format_double(noise_scale) << "\n";
    o << "schema=" << join(resolve_schema(schema), ",") << "\n";
    o << "n_layers=" << n_layers << "\n";
    o << "d_model=" << d_model << "\n";
    o << "n_heads=" << n_heads << "\n";
    o << "ffn_dim=" << ffn_dim << "\n";
    o << "pooling=" << pooling << "\n";
    o << "positional_encoding=" << (positional_encoding ? 1 : 0) << "\n";
    o << "kernel_width=" << kernel_width << "\n";
    o << "learning_rate=" << format_double(learning_rate) << "\n";
    o << "batch_size=" << batch_size << "\n";
    o << "epochs=" << epochs << "\n";
    o << "optimizer=" << optimizer << "\n";
    o << "clip_epsilon=" << format_double(clip_epsilon) << "\n";
    o << "seed=" << seed << "\n";
    o << "out=" << out << "\n";
    o << "manifest=" << manifest << "\n";
    o << "checkpoint=" << checkpoint << "\n";
    o << "split=" << split_file << "\n";
    o << "strict_schema=" << (strict_schema ? 1 : 0) << "\n";
    o << "gradcheck_seeds=" << gradcheck_seeds << "\n";
    return o.str();
}

void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": expected key=value, got '" + t + "'");
        }
        cfg.set(trim(t.substr(0, eq)), t.substr(eq + 1));
    }
}

void apply_set_overrides(RunConfig& cfg, const std::vector<std::string>& kvs) {
    for (const std::string& kv : kvs) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        }
        cfg.set(trim(kv.substr(0, eq)), kv.substr(eq + 1));
    }
}

void write_config_echo(const RunConfig& cfg) {
    std::ofstream out(fs::path(cfg.out) / "config.echo");
    if (!out) throw ParseError("cannot write config.echo under " + cfg.out);
    out << cfg.echo();
}

ModelConfig model_config_from(const RunConfig& cfg, std::size_t n_vars) {
    ModelConfig mc;
    mc.n_layers = cfg.n_layers;
    mc.d_model = cfg.d_model;
    mc.n_heads = cfg.n_heads;
    mc.ffn_dim = cfg.ffn_dim;
    mc.seq_len = cfg.seq_len;
    mc.n_vars = n_vars;
    mc.pooling = parse_pooling(cfg.pooling);
    mc.positional_encoding = cfg.positional_encoding;
    mc.kernel_width = cfg.kernel_width;
    mc.validate();
    return mc;
}

// Sub-seed streams derived from the master seed so generation, splitting,
// initialization, and batch shuffling draw from independent sequences.
constexpr std::uint64_t kSplitStream = 1;
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kShuffleStream = 3;

// ---- generate ------------------------------------------------------------

int cmd_generate(const RunConfig& cfg) {
    SynthConfig sc;
    sc.n_scenarios = cfg.n_scenarios;
    sc.seq_len = cfg.seq_len;
    sc.damage_fraction = cfg.damage_fraction;
    sc.noise_scale = cfg.noise_scale;
    sc.seed = cfg.seed;
    sc.schema = resolve_schema(cfg.schema);
    sc.validate();

    const fs::path out_dir(cfg.out);
    fs::create_directories(out_dir / "scenarios");

    GeneratedDataset gen = generate_dataset(sc);
    std::vector<ManifestEntry> manifest;
    for (const Scenario& s : gen.dataset.scenarios) {
        const std::string rel = "scenarios/" + s.id + ".csv";
        write_scenario_csv((out_dir / rel).string(), s);
        manifest.push_back({s.id, rel});
    }
    write_manifest_csv((out_dir / "manifest.csv").string(), manifest);

    std::ostringstream report;
    report << "scenarios=" << gen.report.n_total << "\n"
           << "core_damage=" << gen.report.n_core_damage << "\n"
           << "ok=" << gen.report.n_ok << "\n"
           << "label_mismatches=" << gen.report.label_mismatches << "\n"
           << "seed=" << sc.seed << "\n";
    std::ofstream rep(out_dir / "generation_report.txt");
    rep << report.str();
    write_config_echo(cfg);

    std::cout << "generated " << gen.report.n_total << " scenarios into " << cfg.out << "\n"
              << report.str();
    return kExitOk;
}

// ---- train ---------------------------------------------------------------

std::vector<std::pair<std::string, Metrics>> evaluate_splits(
    Model& model, const PreparedDataset& data, const SplitAssignment& split) {
    std::vector<std::pair<std::string, Metrics>> rows;
    for (Split s : {Split::Train, Split::Test, Split::Validation}) {
        rows.emplace_back(split_name(s), evaluate(model, data, split.indices(s)));
    }
    return rows;
}

void print_metrics(const std::vector<std::pair<std::string, Metrics>>& rows) {
    for (const auto& [name, m] : rows) {
        std::printf("%-11s accuracy=%.4f  tp=%zu tn=%zu fp=%zu fn=%zu n=%zu\n", name.c_str(),
                    m.accuracy, m.tp, m.tn, m.fp, m.fn, m.n_total);
    }
}

int cmd_train(const RunConfig& cfg) {
    if (cfg.manifest.empty()) throw ConfigError("train requires --manifest (or manifest= key)");
    const fs::path out_dir(cfg.out);
    fs::create_directories(out_dir);

    LabeledDataset ds = load_scenarios(cfg.manifest, cfg.strict_schema);
    PreparedDataset prepared = prepare_dataset(ds, cfg.seq_len);
    const SplitAssignment split =
        split_dataset(ds.size(), SplitFractions{}, mix_seed(cfg.seed, kSplitStream));

    Model model = make_model(parse_arch(cfg.arch),
                             model_config_from(cfg, prepared.var_names.size()),
                             mix_seed(cfg.seed, kInitStream));

    TrainConfig tc;
    tc.learning_rate = cfg.learning_rate;
    tc.batch_size = cfg.batch_size;
    tc.epochs = cfg.epochs;
    tc.optimizer = parse_optimizer(cfg.optimizer);
    tc.seed = mix_seed(cfg.seed, kShuffleStream);
    tc.clip_epsilon = cfg.clip_epsilon;

    const LossTrace trace = train_one_epoch(model, prepared, split.indices(Split::Train), tc);
    const auto rows = evaluate_splits(model, prepared, split);

    save_checkpoint((out_dir / "checkpoint.seqv1").string(), model);
    write_loss_csv((out_dir / "loss.csv").string(), trace);
    write_metrics_csv((out_dir / "metrics.csv").string(), rows);
    write_split_csv(out_dir / "split.csv", ds, split);
    write_config_echo(cfg);

    std::cout << "trained " << cfg.arch << " on " << split.count(Split::Train) << " scenarios ("
              << trace.size() << " batches); artifacts in " << cfg.out << "\n";
    print_metrics(rows);
    return kExitOk;
}

// ---- eval ----------------------------------------------------------------

int cmd_eval(const RunConfig& cfg) {
    if (cfg.checkpoint.empty()) throw ConfigError("eval requires --checkpoint");
    if (cfg.manifest.empty()) throw ConfigError("eval requires --manifest");
    const fs::path out_dir(cfg.out);
    fs::create_directories(out_dir);

    Model model = load_checkpoint(cfg.checkpoint);
    LabeledDataset ds = load_scenarios(cfg.manifest, cfg.strict_schema);
    PreparedDataset prepared = prepare_dataset(ds, model.config.seq_len);
    if (!prepared.var_names.empty() && prepared.var_names.size() != model.config.n_vars) {
        throw ConfigError("checkpoint/data mismatch: checkpoint n_vars=" +
                          std::to_string(model.config.n_vars) + ", data has " +
                          std::to_string(prepared.var_names.size()) + " variables");
    }

    std::vector<std::pair<std::string, Metrics>> rows;
    if (!cfg.split_file.empty()) {
        const auto tags = read_split_csv(cfg.split_file);
        std::map<std::string, Split> by_id(tags.begin(), tags.end());
        std::map<Split, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const auto it = by_id.find(ds.scenarios[i].id);
            if (it == by_id.end()) {
                throw SchemaError("scenario '" + ds.scenarios[i].id + "' missing from split file " +
                                  cfg.split_file);
            }
            groups[it->second].push_back(i);
        }
        for (Split s : {Split::Train, Split::Test, Split::Validation}) {
            if (groups.count(s)) {
                rows.emplace_back(split_name(s), evaluate(model, prepared, groups[s]));
            }
        }
        if (rows.empty()) throw ContractError("split file assigns no scenario in the manifest");
    } else {
        std::vector<std::size_t> all(ds.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        rows.emplace_back("all", evaluate(model, prepared, all));
    }

    write_metrics_csv((out_dir / "metrics.csv").string(), rows);
    write_config_echo(cfg);
    std::cout << "evaluated " << ds.size() << " scenarios with " << arch_name(model.arch)
              << " checkpoint " << cfg.checkpoint << "\n";
    print_metrics(rows);
    return kExitOk;
}

// ---- gradcheck -----------------------------------------------------------

int cmd_gradcheck(const RunConfig& cfg) {
    GradCheckConfig gc;
    gc.seed = cfg.seed;
    gc.n_seeds = cfg.gradcheck_seeds;
    const auto results = run_gradcheck(gc);
    bool all_pass = true;
    for (const GradCheckResult& r : results) {
        const bool pass = r.passed(gc.tolerance);
        all_pass = all_pass && pass;
        std::printf("%-12s max_rel_err=%.3e", arch_name(r.arch), r.worst.max_rel_err);
        if (!r.worst.param.empty()) {
            std::printf("  worst=%s[%zu]", r.worst.param.c_str(), r.worst.index);
        }
        std::printf("  seeds=%zu scalars=%zu  %s\n", r.seeds_run, r.scalars_checked,
                    pass ? "PASS" : "FAIL");
    }
    std::printf("gradient check: %s (tolerance %.1e)\n", all_pass ? "PASS" : "FAIL",
                gc.tolerance);
    return all_pass ? kExitOk : kExitVerification;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multivariate time-series scenario classifier (transformer / rnn / cnn)"};
    app.require_subcommand(1);

    struct Flags {
        std::string config_path;
        std::uint64_t seed = 0;
        std::string out, arch, manifest, checkpoint, split;
        std::vector<std::string> sets;
    };

    auto add_common = [](CLI::App* sub, Flags& f) {
        sub->add_option("--config", f.config_path, "key=value config file");
        sub->add_option("--seed", f.seed, "master seed");
        sub->add_option("--out", f.out, "output directory");
        sub->add_option("--set", f.sets, "override any config key (key=value)");
    };

    Flags fg, ft, fe, fc;
    CLI::App* gen = app.add_subcommand("generate", "synthesize labeled scenario CSVs");
    add_common(gen, fg);

    CLI::App* train = app.add_subcommand("train", "train a classifier from a manifest");
    add_common(train, ft);
    train->add_option("--arch", ft.arch, "transformer|rnn|cnn");
    train->add_option("--manifest", ft.manifest, "scenario manifest CSV");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
    add_common(eval, fe);
    eval->add_option("--checkpoint", fe.checkpoint, "model checkpoint");
    eval->add_option("--manifest", fe.manifest, "scenario manifest CSV");
    eval->add_option("--split", fe.split, "split CSV; evaluates each split separately");

    CLI::App* grad = app.add_subcommand("gradcheck", "verify gradients vs finite differences");
    add_common(grad, fc);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    // Flags beat --set overrides, which beat the config file. count() is only
    // safe for options the subcommand actually defines, hence the lookup.
    const auto used = [](CLI::App* sub, const std::string& name) {
        const CLI::Option* o = sub->get_option_no_throw(name);
        return o != nullptr && o->count() > 0;
    };
    const auto resolve = [&](CLI::App* sub, Flags& f) {
        RunConfig cfg;
        if (!f.config_path.empty()) load_config_file(cfg, f.config_path);
        apply_set_overrides(cfg, f.sets);
        if (used(sub, "--seed")) cfg.seed = f.seed;
        if (used(sub, "--out")) cfg.out = f.out;
        if (used(sub, "--arch")) cfg.arch = f.arch;
        if (used(sub, "--manifest")) cfg.manifest = f.manifest;
        if (used(sub, "--checkpoint")) cfg.checkpoint = f.checkpoint;
        if (used(sub, "--split")) cfg.split_file = f.split;
        return cfg;
    };

    try {
        if (gen->parsed()) return cmd_generate(resolve(gen, fg));
        if (train->parsed()) return cmd_train(resolve(train, ft));
        if (eval->parsed()) return cmd_eval(resolve(eval, fe));
        if (grad->parsed()) return cmd_gradcheck(resolve(grad, fc));
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const SchemaError& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return kExitData;
    } catch (const ParseError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const DimensionError& e) {
        std::cerr << "dimension error: " << e.what() << "\n";
        return kExitData;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
