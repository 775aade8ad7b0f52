#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "twin/benchmark.hpp"
#include "twin/dataio.hpp"
#include "twin/nde.hpp"

#include <json.hpp>

using namespace twin;
namespace fs = std::filesystem;

namespace {

std::string bin() {
    const char* b = std::getenv("TWINNET_BIN");
    REQUIRE(b != nullptr);
    return b;
}

int run(const std::string& args) {
    const int status = std::system((bin() + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct Workdir {
    fs::path dir;
    Workdir() : dir(fs::temp_directory_path() / "twinnet_cli_test") {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Workdir() { fs::remove_all(dir); }
    std::string p(const std::string& name) const { return (dir / name).string(); }
    void write(const std::string& name, const std::string& content) const {
        std::ofstream out(p(name));
        out << content;
    }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

nlohmann::json load(const std::string& path) {
    return nlohmann::json::parse(slurp(path));
}

}  // namespace

TEST_CASE("usage and config errors exit with code 2") {
    CHECK(run("") == 2);
    CHECK(run("frobnicate") == 2);
    Workdir w;
    CHECK(run("gen-data --system nope --out " + w.p("x.jsonl")) == 2);
    CHECK(run("gen-data --system li-det") == 2);  // missing --out
}

TEST_CASE("missing or malformed input files exit with code 3") {
    Workdir w;
    CHECK(run("train-ode --data " + w.p("missing.jsonl") + " --out " + w.p("o")) == 3);
    w.write("bad.jsonl", "not json\n");
    CHECK(run("train-ode --data " + w.p("bad.jsonl") + " --out " + w.p("o")) == 3);
}

TEST_CASE("gen-data is reproducible bit for bit and writes a manifest") {
    Workdir w;
    w.write("cfg.json", R"({"n_sequences":3,"seq_len":25,"seed":5})");
    const std::string a = w.p("a/data.jsonl"), b = w.p("b/data.jsonl");
    REQUIRE(run("gen-data --system li --config " + w.p("cfg.json") + " --out " + a) ==
            0);
    REQUIRE(run("gen-data --system li --config " + w.p("cfg.json") + " --out " + b) ==
            0);
    CHECK(slurp(a) == slurp(b));
    Dataset data = read_trajectories_jsonl(a);
    CHECK(data.trajectories.size() == 3);
    CHECK(data.trajectories[0].signal.rows() == 25);
    nlohmann::json manifest = load(w.p("a/manifest.json"));
    CHECK(manifest.at("command") == "gen-data");
    CHECK(manifest.contains("config_hash"));
    CHECK(manifest.at("config").at("seed") == 5);
}

TEST_CASE("the full pipeline runs end to end on a miniature setup") {
    Workdir w;
    w.write("gen.json", R"({"n_sequences":6,"seq_len":40,"seed":1})");
    REQUIRE(run("gen-data --system li-det --config " + w.p("gen.json") + " --out " +
                w.p("data.jsonl")) == 0);

    w.write("ode.json",
            R"({"epochs":2,"batches_per_epoch":4,"batch":4,"T":8,"hidden":[8],"n_a":0,"n_delay":2})");
    REQUIRE(run("train-ode --data " + w.p("data.jsonl") + " --config " +
                w.p("ode.json") + " --out " + w.p("ode")) == 0);
    NeuralSdeModel m = load_model(w.p("ode/model.json"));
    CHECK(m.n_delay == 2);
    CHECK(load(w.p("ode/training.json")).at("val_loss").size() == 2);

    REQUIRE(run("check-grads --model " + w.p("ode/model.json") +
                " --system li-det --trajectories 2 --out " + w.p("grads")) == 0);
    nlohmann::json grads = load(w.p("grads/gradients.json"));
    CHECK(grads.at("jacobians").contains("mean_correlation"));
    CHECK(grads.at("eligibility").contains("mean_rel_gap"));
    CHECK(fs::exists(w.p("grads/jacobian_series.csv")));

    // tiny image fixture
    Mat images(20, 16);
    std::vector<int> labels;
    for (int i = 0; i < 20; ++i) {
        for (int k = 0; k < 16; ++k) images(i, k) = ((i + k) % 5) / 4.0;
        labels.push_back(i % 10);
    }
    write_idx_images(w.p("imgs.idx"), images, 4, 4);
    write_idx_labels(w.p("lbls.idx"), labels);

    CHECK(run("make-task --idx-images " + w.p("imgs.idx") + " --idx-labels " +
              w.p("lbls.idx") + " --visible 0.2 --frames 2 --out " +
              w.p("bad_task.jsonl")) == 2);  // cannot cover the image

    REQUIRE(run("make-task --idx-images " + w.p("imgs.idx") + " --idx-labels " +
                w.p("lbls.idx") + " --visible 0.5 --frames 2 --seed 3 --out " +
                w.p("task.jsonl")) == 0);
    TaskData task = read_task_jsonl(w.p("task.jsonl"));
    CHECK(task.episodes.size() == 20);
    CHECK(task.n_features == 4);  // 4x4 pooled 2x2

    w.write("net.json", R"({"epochs":1,"batch":8,"steps_per_frame":2,"lr":0.01})");
    REQUIRE(run("train-net --nodes " + w.p("ode/model.json") +
                " --layers 2 --task " + w.p("task.jsonl") + " --config " +
                w.p("net.json") + " --out " + w.p("net")) == 0);
    CHECK(load(w.p("net/theta.json")).at("format_version") == "theta-v1");

    REQUIRE(run("eval-net --theta " + w.p("net/theta.json") +
                " --nodes-ref li-det --task " + w.p("task.jsonl") + " --config " +
                w.p("net.json") + " --out " + w.p("eval")) == 0);
    nlohmann::json rep = load(w.p("eval/report.json"));
    CHECK(rep.at("accuracy").get<double>() >= 0.0);
    CHECK(rep.at("accuracy").get<double>() <= 1.0);
    CHECK(rep.at("baseline") == "none");

    REQUIRE(run("eval-net --theta " + w.p("net/theta.json") +
                " --nodes-ref li-det --task " + w.p("task.jsonl") +
                " --baseline reservoir --train-task " + w.p("task.jsonl") +
                " --config " + w.p("net.json") + " --out " + w.p("resv")) == 0);
    CHECK(load(w.p("resv/report.json")).at("baseline") == "reservoir");

    REQUIRE(run("eval-net --theta " + w.p("net/theta.json") +
                " --nodes-ref li-det --task " + w.p("task.jsonl") +
                " --baseline mlp --train-task " + w.p("task.jsonl") +
                " --config " + w.p("net.json") + " --out " + w.p("mlp")) == 0);
    nlohmann::json mrep = load(w.p("mlp/report.json"));
    CHECK(mrep.at("baseline") == "mlp");
    CHECK(mrep.at("n_params").get<long>() > 0);

    // missing --train-task for a baseline is a config error
    CHECK(run("eval-net --theta " + w.p("net/theta.json") +
              " --nodes-ref li-det --task " + w.p("task.jsonl") +
              " --baseline reservoir --out " + w.p("x")) == 2);
}
