// twinnet: digital-twin pipeline driver.
//
// Subcommands: gen-data, train-ode, train-sde, validate, check-grads,
// make-task, train-net, eval-net. Every run writes a manifest.json into the
// output directory with the fully resolved configuration so the artifact can
// be reproduced bit for bit.
//
// Exit codes: 0 ok, 2 configuration error, 3 data-format error,
// 4 numerical divergence.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "twin/benchmark.hpp"
#include "twin/dataio.hpp"
#include "twin/nde.hpp"
#include "twin/network.hpp"
#include "twin/refsys.hpp"
#include "twin/rng.hpp"
#include "twin/training.hpp"
#include "twin/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace twin;

namespace {

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError("config parse: " + std::string(e.what()));
    }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << j.dump(2) << "\n";
}

void write_manifest(const std::string& dir, const std::string& command,
                    const json& resolved) {
    json m;
    m["tool"] = "twinnet";
    m["format_version"] = "manifest-v1";
    m["command"] = command;
    m["config"] = resolved;
    std::ostringstream key;
    key << command << resolved.dump();
    std::ostringstream hash;
    hash << std::hex << fnv1a(key.str());
    m["config_hash"] = hash.str();
    write_json((fs::path(dir) / "manifest.json").string(), m);
}

std::vector<int> parse_layers(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(std::stoi(tok));
    if (out.empty()) throw ConfigError("layers: expected e.g. \"30,30\"");
    return out;
}

// ---------------------------------------------------------------- gen-data

int cmd_gen_data(const std::string& system, const std::string& config_path,
                 const std::string& out) {
    RefSystem sys = RefSystem::from_id(system);
    json cfg = load_config(config_path);
    BuildSpec spec = default_build_spec(sys);
    spec.n_sequences = get_or(cfg, "n_sequences", spec.n_sequences);
    spec.seq_len = get_or(cfg, "seq_len", spec.seq_len);
    spec.hold_lengths = get_or(cfg, "hold_lengths", spec.hold_lengths);
    spec.level_lo = get_or(cfg, "level_lo", spec.level_lo);
    spec.level_hi = get_or(cfg, "level_hi", spec.level_hi);
    spec.burn_in = get_or(cfg, "burn_in", spec.burn_in);
    spec.seed = get_or(cfg, "seed", spec.seed);

    Dataset data = build_dataset(sys, spec);
    fs::create_directories(fs::path(out).parent_path().empty()
                               ? "."
                               : fs::path(out).parent_path().string());
    write_trajectories_jsonl(out, data);

    json resolved = {{"system", system},
                     {"n_sequences", spec.n_sequences},
                     {"seq_len", spec.seq_len},
                     {"hold_lengths", spec.hold_lengths},
                     {"level_lo", spec.level_lo},
                     {"level_hi", spec.level_hi},
                     {"burn_in", spec.burn_in},
                     {"seed", spec.seed},
                     {"out", out}};
    const fs::path dir = fs::path(out).parent_path();
    write_manifest(dir.empty() ? "." : dir.string(), "gen-data", resolved);
    std::cout << "wrote " << data.trajectories.size() << " trajectories to " << out
              << "\n";
    return 0;
}

// ---------------------------------------------------------------- train-ode

int cmd_train_ode(const std::string& data_path, const std::string& config_path,
                  const std::string& out) {
    Dataset data = read_trajectories_jsonl(data_path);
    if (data.trajectories.empty()) throw FormatError("dataset is empty");
    json cfg = load_config(config_path);

    const int n_delay = get_or(cfg, "n_delay", 2);
    const std::vector<int> hidden = get_or(cfg, "hidden", std::vector<int>{64, 64});
    const int n_a = get_or(cfg, "n_a", 2);
    const bool time_input = get_or(cfg, "time_input", false);
    const double omega = get_or(cfg, "omega", 1.0);
    const std::uint64_t seed = get_or(cfg, "seed", std::uint64_t{0});

    NeuralSdeModel m = make_model(data.n_x(), data.n_s(), n_delay,
                                  data.trajectories[0].dt, hidden, n_a, seed,
                                  time_input, omega);
    PretrainConfig pc;
    pc.epochs = get_or(cfg, "epochs", pc.epochs);
    pc.batches_per_epoch = get_or(cfg, "batches_per_epoch", pc.batches_per_epoch);
    pc.batch = get_or(cfg, "batch", pc.batch);
    pc.T = get_or(cfg, "T", pc.T);
    pc.lr = get_or(cfg, "lr", pc.lr);
    pc.seed = seed;
    PretrainResult res = pretrain_ode(m, data, pc);

    fs::create_directories(out);
    json resolved = {{"data", data_path},   {"n_delay", n_delay},
                     {"hidden", hidden},    {"n_a", n_a},
                     {"time_input", time_input}, {"omega", omega},
                     {"epochs", pc.epochs}, {"batches_per_epoch", pc.batches_per_epoch},
                     {"batch", pc.batch},   {"T", pc.T},
                     {"lr", pc.lr},         {"seed", seed}};
    save_model((fs::path(out) / "model.json").string(), m, resolved);

    const int aug_bins = get_or(cfg, "aug_bins", 0);
    json curves = {{"train_loss", res.train_loss},
                   {"val_loss", res.val_loss},
                   {"lr_halvings", res.lr_halvings}};
    if (aug_bins > 0) {
        AugNoiseTable table = fit_aug_noise(m, data, aug_bins);
        json stds = json::array();
        for (long i = 0; i < table.stds.rows(); ++i) {
            json row = json::array();
            for (long j = 0; j < table.stds.cols(); ++j) row.push_back(table.stds(i, j));
            stds.push_back(std::move(row));
        }
        curves["aug_noise"] = {{"lo", table.lo}, {"hi", table.hi}, {"stds", stds}};
    }
    write_json((fs::path(out) / "training.json").string(), curves);
    write_manifest(out, "train-ode", resolved);
    std::cout << "final validation mse " << res.val_loss.back() << "\n";
    return 0;
}

// ---------------------------------------------------------------- train-sde

int cmd_train_sde(const std::string& data_path, const std::string& init_path,
                  const std::string& system, const std::string& config_path,
                  const std::string& out) {
    Dataset data = read_trajectories_jsonl(data_path);
    NeuralSdeModel m = load_model(init_path);
    RefSystem sys = RefSystem::from_id(system);
    json cfg = load_config(config_path);

    SdeTrainConfig sc;
    sc.iterations = get_or(cfg, "iterations", sc.iterations);
    sc.n_disc = get_or(cfg, "n_disc", sc.n_disc);
    sc.batch = get_or(cfg, "batch", sc.batch);
    sc.T = get_or(cfg, "T", sc.T);
    sc.lr = get_or(cfg, "lr", sc.lr);
    sc.lambda = get_or(cfg, "lambda", sc.lambda);
    sc.disc_hidden = get_or(cfg, "disc_hidden", sc.disc_hidden);
    sc.val_every = get_or(cfg, "val_every", sc.val_every);
    sc.patience = get_or(cfg, "patience", sc.patience);
    sc.seed = get_or(cfg, "seed", std::uint64_t{0});
    sc.val.n_signals = get_or(cfg, "val_signals", sc.val.n_signals);
    sc.val.n_repeats = get_or(cfg, "val_repeats", sc.val.n_repeats);
    sc.val.steps = get_or(cfg, "val_steps", sc.val.steps);
    sc.val.max_lag = get_or(cfg, "val_lag", sc.val.max_lag);
    sc.val.seed = sc.seed;
    sc.val.signal_template.level_lo = get_or(cfg, "level_lo", -3.0);
    sc.val.signal_template.level_hi = get_or(cfg, "level_hi", 3.0);
    sc.val.signal_template.hold_length = get_or(cfg, "hold_length", 5);

    m.mode = ModelMode::sde;
    SdeTrainResult res = train_sde(m, data, sys, sc);

    fs::create_directories(out);
    json resolved = {{"data", data_path},       {"init", init_path},
                     {"system", system},        {"iterations", sc.iterations},
                     {"n_disc", sc.n_disc},     {"batch", sc.batch},
                     {"T", sc.T},               {"lr", sc.lr},
                     {"lambda", sc.lambda},     {"disc_hidden", sc.disc_hidden},
                     {"val_every", sc.val_every}, {"patience", sc.patience},
                     {"seed", sc.seed}};
    save_model((fs::path(out) / "model.json").string(), res.best, resolved);
    json curves = {{"disc_loss", res.disc_loss_curve},
                   {"gen_loss", res.gen_loss_curve},
                   {"best_iteration", res.best_iteration}};
    json vals = json::array();
    for (const auto& [it, v] : res.validations)
        vals.push_back({{"iteration", it},
                        {"mean_gap", v.mean_gap},
                        {"std_gap", v.std_gap},
                        {"autocov_gap", v.autocov_gap},
                        {"ref_std", v.ref_std},
                        {"score", v.score()}});
    curves["validations"] = std::move(vals);
    write_json((fs::path(out) / "training.json").string(), curves);
    write_manifest(out, "train-sde", resolved);
    std::cout << "best iteration " << res.best_iteration << "\n";
    return 0;
}

// ----------------------------------------------------------------- validate

int cmd_validate(const std::string& model_path, const std::string& system,
                 int repeats, const std::string& config_path,
                 const std::string& out) {
    NeuralSdeModel m = load_model(model_path);
    RefSystem sys = RefSystem::from_id(system);
    json cfg = load_config(config_path);

    FidelityConfig fc;
    fc.n_repeats = repeats;
    fc.levels = get_or(cfg, "levels", std::vector<double>{});
    fc.steps = get_or(cfg, "steps", fc.steps);
    fc.seed = get_or(cfg, "seed", std::uint64_t{0});
    fc.val.n_signals = get_or(cfg, "val_signals", fc.val.n_signals);
    fc.val.n_repeats = get_or(cfg, "val_repeats", fc.val.n_repeats);
    fc.val.steps = get_or(cfg, "val_steps", fc.val.steps);
    fc.val.max_lag = get_or(cfg, "val_lag", fc.val.max_lag);
    fc.val.seed = fc.seed;
    if (sys.kind == SystemKind::duffing) {
        fc.val.signal_template.level_lo = -0.2;
        fc.val.signal_template.level_hi = 0.2;
        fc.val.signal_template.hold_length = 20;
    }

    FidelityReport rep = fidelity_report(m, sys, fc);
    fs::create_directories(out);
    write_json((fs::path(out) / "fidelity.json").string(), fidelity_to_json(rep));
    json resolved = {{"model", model_path}, {"system", system},
                     {"repeats", repeats},  {"levels", fc.levels},
                     {"steps", fc.steps},   {"seed", fc.seed}};
    write_manifest(out, "validate", resolved);
    std::cout << "combined score " << rep.stats.score() << "\n";
    return 0;
}

// -------------------------------------------------------------- check-grads

int cmd_check_grads(const std::string& model_path, const std::string& system,
                    int n_traj, const std::string& out) {
    NeuralSdeModel m = load_model(model_path);
    RefSystem sys = RefSystem::from_id(system);

    SignalSpec tmpl;
    if (sys.kind == SystemKind::duffing) {
        tmpl.level_lo = -0.2;
        tmpl.level_hi = 0.2;
        tmpl.hold_length = 20;
    }
    JacobianReport jac = compare_jacobians(m, sys, n_traj, tmpl, 0);

    SignalSpec esig = tmpl;
    esig.seed = 1;
    EligibilityReport elig = compare_eligibility(m, sys, gen_square(esig));

    fs::create_directories(out);
    json rep = {{"jacobians", jacobian_to_json(jac)},
                {"eligibility", eligibility_to_json(elig)}};
    write_json((fs::path(out) / "gradients.json").string(), rep);
    write_series_csv((fs::path(out) / "jacobian_series.csv").string(),
                     {"model", "exact"},
                     {Eigen::Map<const Vec>(jac.series.model.data(),
                                            jac.series.model.size()),
                      Eigen::Map<const Vec>(jac.series.exact.data(),
                                            jac.series.exact.size())});
    json resolved = {{"model", model_path},
                     {"system", system},
                     {"trajectories", n_traj}};
    write_manifest(out, "check-grads", resolved);
    std::cout << "mean jacobian correlation " << jac.mean_correlation
              << ", mean eligibility gap " << elig.mean_rel_gap << "\n";
    return 0;
}

// ---------------------------------------------------------------- make-task

int cmd_make_task(const std::string& images_path, const std::string& labels_path,
                  double visible, int frames, const std::string& mode, int count,
                  std::uint64_t seed, const std::string& out) {
    ImageSet set = load_idx_images(images_path, labels_path);
    if (count > 0) set = stratified_subset(set, count, seed);
    MaskedSequenceTask task;
    task.frames = frames;
    task.visible = visible;
    task.seed = seed;
    if (mode == "disjoint")
        task.mode = MaskMode::disjoint_partition;
    else if (mode == "iid")
        task.mode = MaskMode::iid_random;
    else
        throw ConfigError("make-task: mode must be disjoint or iid");
    TaskData data = make_episodes(set, task);
    const fs::path dir = fs::path(out).parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    write_task_jsonl(out, data);
    json resolved = {{"images", images_path}, {"labels", labels_path},
                     {"visible", visible},    {"frames", frames},
                     {"mode", mode},          {"count", count},
                     {"seed", seed},          {"out", out}};
    write_manifest(dir.empty() ? "." : dir.string(), "make-task", resolved);
    std::cout << "wrote " << data.episodes.size() << " episodes to " << out << "\n";
    return 0;
}

// ---------------------------------------------------------------- train-net

int cmd_train_net(const std::string& nodes_path, const std::string& layers_arg,
                  const std::string& task_path, const std::string& system,
                  const std::string& config_path, const std::string& out) {
    NeuralSdeModel m = load_model(nodes_path);
    TaskData task = read_task_jsonl(task_path);
    json cfg = load_config(config_path);
    const std::vector<int> layers = parse_layers(layers_arg);
    const std::uint64_t seed = get_or(cfg, "seed", std::uint64_t{0});

    IcDistribution ic;
    if (!system.empty()) {
        RefSystem sys = RefSystem::from_id(system);
        ic = estimate_ic(sys, get_or(cfg, "ic_samples", 128), m.n_delay, seed);
    } else {
        ic.mode = IcMode::fixed_zero;
    }
    ic.dim = m.ydim();

    TwinNetwork net = make_twin_network(
        std::vector<NeuralSdeModel>(layers.size(), m), layers,
        std::vector<IcDistribution>(layers.size(), ic), task.n_features,
        task.n_classes, seed);
    net.steps_per_frame = get_or(cfg, "steps_per_frame", net.steps_per_frame);

    NetTrainConfig nc;
    nc.epochs = get_or(cfg, "epochs", nc.epochs);
    nc.batch = get_or(cfg, "batch", nc.batch);
    nc.lr = get_or(cfg, "lr", nc.lr);
    nc.truncation = get_or(cfg, "truncation", nc.truncation);
    nc.clip_norm = get_or(cfg, "clip_norm", nc.clip_norm);
    nc.seed = seed;
    NetTrainResult res = train_connectivity(net, task, nc);

    fs::create_directories(out);
    write_json((fs::path(out) / "theta.json").string(), theta_to_json(net));
    json curves = {{"loss", res.loss_curve},
                   {"accuracy", res.acc_curve},
                   {"clipped_batches", res.clipped_batches}};
    write_json((fs::path(out) / "training.json").string(), curves);
    json resolved = {{"nodes", nodes_path},   {"layers", layers},
                     {"task", task_path},     {"system", system},
                     {"epochs", nc.epochs},   {"batch", nc.batch},
                     {"lr", nc.lr},           {"truncation", nc.truncation},
                     {"clip_norm", nc.clip_norm},
                     {"steps_per_frame", net.steps_per_frame},
                     {"seed", seed}};
    write_manifest(out, "train-net", resolved);
    std::cout << "final train accuracy " << res.acc_curve.back() << "\n";
    return 0;
}

// ----------------------------------------------------------------- eval-net

ImageSet episodes_to_images(const TaskData& data, bool first_frame_only) {
    ImageSet set;
    set.rows = 1;
    set.cols = data.n_features;
    set.images.resize(data.episodes.size(), data.n_features);
    for (std::size_t i = 0; i < data.episodes.size(); ++i) {
        const auto& ep = data.episodes[i];
        set.images.row(i) = first_frame_only
                                ? Mat(ep.input.row(0))
                                : Mat(ep.input.colwise().sum());
        set.labels.push_back(ep.label);
    }
    return set;
}

int cmd_eval_net(const std::string& theta_path, const std::string& system,
                 const std::string& task_path, const std::string& baseline,
                 const std::string& train_task_path, const std::string& mlp_input,
                 const std::string& config_path, const std::string& out) {
    TaskData test = read_task_jsonl(task_path);
    json cfg = load_config(config_path);
    const std::uint64_t seed = get_or(cfg, "seed", std::uint64_t{0});

    json theta_json = load_config(theta_path);
    const auto layers = theta_json.at("layer_sizes").get<std::vector<int>>();

    json report;
    if (baseline == "mlp") {
        if (train_task_path.empty())
            throw ConfigError("eval-net --baseline mlp needs --train-task");
        TaskData train = read_task_jsonl(train_task_path);
        const bool first = mlp_input == "first";
        MlpBaselineResult res = mlp_baseline(
            episodes_to_images(train, first), episodes_to_images(test, first),
            get_or(cfg, "hidden", std::vector<int>{64}),
            get_or(cfg, "epochs", 20), get_or(cfg, "batch", 32),
            get_or(cfg, "lr", 1e-3), seed);
        report = {{"baseline", "mlp"},
                  {"mlp_input", first ? "first" : "sum"},
                  {"accuracy", res.accuracy},
                  {"n_params", res.n_params}};
    } else {
        RefSystem sys = RefSystem::from_id(system);
        TwinNetwork ref = make_reference_network(
            sys, layers, test.n_features, test.n_classes, seed,
            get_or(cfg, "ic_samples", 128));
        ref.steps_per_frame = get_or(cfg, "steps_per_frame", ref.steps_per_frame);
        EvalReport rep;
        if (baseline == "reservoir") {
            if (train_task_path.empty())
                throw ConfigError("eval-net --baseline reservoir needs --train-task");
            TaskData train = read_task_jsonl(train_task_path);
            TwinNetwork trained = ref;
            theta_from_json(trained, theta_json);
            rep = reservoir_baseline(ref, trained, train, test,
                                     get_or(cfg, "ridge_lambda", 1e-2), seed);
            report["baseline"] = "reservoir";
        } else if (baseline.empty()) {
            theta_from_json(ref, theta_json);
            rep = evaluate(ref, test);
            report["baseline"] = "none";
        } else {
            throw ConfigError("eval-net: unknown baseline " + baseline);
        }
        report["accuracy"] = rep.accuracy;
        report["excluded"] = rep.excluded;
        json conf = json::array();
        for (long i = 0; i < rep.confusion.rows(); ++i) {
            json row = json::array();
            for (long j = 0; j < rep.confusion.cols(); ++j)
                row.push_back(rep.confusion(i, j));
            conf.push_back(std::move(row));
        }
        report["confusion"] = std::move(conf);
    }

    fs::create_directories(out);
    write_json((fs::path(out) / "report.json").string(), report);
    json resolved = {{"theta", theta_path},   {"system", system},
                     {"task", task_path},     {"baseline", baseline},
                     {"train_task", train_task_path}, {"seed", seed}};
    write_manifest(out, "eval-net", resolved);
    std::cout << "accuracy " << report.at("accuracy").get<double>() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"digital-twin simulator-trainer pipeline"};
    app.require_subcommand(1);

    std::string system, config, out, data, init, model, images, labels, theta,
        task, layers_arg, nodes, baseline, train_task, mode = "disjoint",
        mlp_input = "sum";
    double visible = 0.2;
    int frames = 5, repeats = 1000, n_traj = 20, count = 0;
    std::uint64_t seed = 0;

    auto* gen = app.add_subcommand("gen-data", "build a reference dataset");
    gen->add_option("--system", system)->required();
    gen->add_option("--config", config);
    gen->add_option("--out", out)->required();

    auto* tode = app.add_subcommand("train-ode", "deterministic pretraining");
    tode->add_option("--data", data)->required();
    tode->add_option("--config", config);
    tode->add_option("--out", out)->required();

    auto* tsde = app.add_subcommand("train-sde", "adversarial SDE training");
    tsde->add_option("--data", data)->required();
    tsde->add_option("--init", init)->required();
    tsde->add_option("--system", system)->required();
    tsde->add_option("--config", config);
    tsde->add_option("--out", out)->required();

    auto* val = app.add_subcommand("validate", "fidelity report");
    val->add_option("--model", model)->required();
    val->add_option("--system", system)->required();
    val->add_option("--repeats", repeats);
    val->add_option("--config", config);
    val->add_option("--out", out)->required();

    auto* grads = app.add_subcommand("check-grads", "gradient-oracle comparison");
    grads->add_option("--model", model)->required();
    grads->add_option("--system", system)->required();
    grads->add_option("--trajectories", n_traj);
    grads->add_option("--out", out)->required();

    auto* mtask = app.add_subcommand("make-task", "build benchmark episodes");
    mtask->add_option("--idx-images", images)->required();
    mtask->add_option("--idx-labels", labels)->required();
    mtask->add_option("--visible", visible);
    mtask->add_option("--frames", frames);
    mtask->add_option("--mode", mode);
    mtask->add_option("--count", count);
    mtask->add_option("--seed", seed);
    mtask->add_option("--out", out)->required();

    auto* tnet = app.add_subcommand("train-net", "connectivity training on twins");
    tnet->add_option("--nodes", nodes)->required();
    tnet->add_option("--layers", layers_arg)->required();
    tnet->add_option("--task", task)->required();
    tnet->add_option("--system", system);
    tnet->add_option("--config", config);
    tnet->add_option("--out", out)->required();

    auto* enet = app.add_subcommand("eval-net", "transfer evaluation / baselines");
    enet->add_option("--theta", theta)->required();
    enet->add_option("--nodes-ref", system);
    enet->add_option("--task", task)->required();
    enet->add_option("--baseline", baseline);
    enet->add_option("--train-task", train_task);
    enet->add_option("--mlp-input", mlp_input);
    enet->add_option("--config", config);
    enet->add_option("--out", out)->required();

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_gen_data(system, config, out);
        if (tode->parsed()) return cmd_train_ode(data, config, out);
        if (tsde->parsed()) return cmd_train_sde(data, init, system, config, out);
        if (val->parsed()) return cmd_validate(model, system, repeats, config, out);
        if (grads->parsed()) return cmd_check_grads(model, system, n_traj, out);
        if (mtask->parsed())
            return cmd_make_task(images, labels, visible, frames, mode, count,
                                 seed, out);
        if (tnet->parsed())
            return cmd_train_net(nodes, layers_arg, task, system, config, out);
        if (enet->parsed())
            return cmd_eval_net(theta, system, task, baseline, train_task,
                                mlp_input, config, out);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n" << app.help() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 4;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 3;
    } catch (const ShapeError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
