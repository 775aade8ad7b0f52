#include "twin/benchmark.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "twin/mlp.hpp"
#include "twin/rng.hpp"
#include "twin/tape.hpp"

#include <json.hpp>

namespace twin {

void MaskedSequenceTask::check() const {
    if (frames < 1) throw ConfigError("MaskedSequenceTask: frames < 1");
    if (!(visible > 0.0 && visible <= 1.0))
        throw ConfigError("MaskedSequenceTask: visible fraction outside (0, 1]");
    if (pool < 1) throw ConfigError("MaskedSequenceTask: pool factor < 1");
    if (mode == MaskMode::disjoint_partition && frames * visible < 1.0 - 1e-9)
        throw ConfigError(
            "MaskedSequenceTask: disjoint partition cannot cover the image "
            "(frames * visible < 1)");
}

ImageSet preprocess_images(const ImageSet& set, int factor) {
    if (factor < 1 || set.rows % factor != 0 || set.cols % factor != 0)
        throw ConfigError("preprocess_images: image size not divisible by factor");
    ImageSet out;
    out.rows = set.rows / factor;
    out.cols = set.cols / factor;
    out.labels = set.labels;
    out.images.resize(set.images.rows(), long(out.rows) * out.cols);
    for (long n = 0; n < set.images.rows(); ++n)
        for (int r = 0; r < out.rows; ++r)
            for (int c = 0; c < out.cols; ++c) {
                double sum = 0;
                for (int dr = 0; dr < factor; ++dr)
                    for (int dc = 0; dc < factor; ++dc)
                        sum += set.images(n, long(r * factor + dr) * set.cols +
                                                  c * factor + dc);
                out.images(n, long(r) * out.cols + c) = sum / (factor * factor);
            }
    return out;
}

ImageSet stratified_subset(const ImageSet& set, int n, std::uint64_t seed) {
    const int n_classes =
        set.labels.empty()
            ? 0
            : *std::max_element(set.labels.begin(), set.labels.end()) + 1;
    if (n_classes == 0 || n > static_cast<int>(set.labels.size()))
        throw ConfigError("stratified_subset: not enough images");
    std::vector<std::vector<long>> by_class(n_classes);
    for (std::size_t i = 0; i < set.labels.size(); ++i)
        by_class[set.labels[i]].push_back(static_cast<long>(i));
    auto g = rng_stream(seed, 0x57A7);
    for (auto& v : by_class) std::shuffle(v.begin(), v.end(), g);

    std::vector<long> picked;
    std::vector<std::size_t> cursor(n_classes, 0);
    int cls = 0;
    while (static_cast<int>(picked.size()) < n) {
        int tried = 0;
        while (cursor[cls] >= by_class[cls].size() && tried++ < n_classes)
            cls = (cls + 1) % n_classes;
        if (cursor[cls] >= by_class[cls].size())
            throw ConfigError("stratified_subset: classes exhausted");
        picked.push_back(by_class[cls][cursor[cls]++]);
        cls = (cls + 1) % n_classes;
    }
    std::shuffle(picked.begin(), picked.end(), g);

    ImageSet out;
    out.rows = set.rows;
    out.cols = set.cols;
    out.images.resize(n, set.images.cols());
    for (int i = 0; i < n; ++i) {
        out.images.row(i) = set.images.row(picked[i]);
        out.labels.push_back(set.labels[picked[i]]);
    }
    return out;
}

ImageSet mask_images(const ImageSet& set, double visible, std::uint64_t seed) {
    if (!(visible > 0.0 && visible <= 1.0))
        throw ConfigError("mask_images: visible fraction outside (0, 1]");
    ImageSet out = set;
    const long d = set.images.cols();
    const long keep = std::max<long>(1, std::lround(visible * d));
    std::vector<long> idx(d);
    for (long n = 0; n < out.images.rows(); ++n) {
        std::iota(idx.begin(), idx.end(), 0);
        auto g = rng_stream(mix64(seed) ^ mix64(0x3A50 + n), 0);
        std::shuffle(idx.begin(), idx.end(), g);
        for (long k = keep; k < d; ++k) out.images(n, idx[k]) = 0.0;
    }
    return out;
}

TaskData make_episodes(const ImageSet& set, const MaskedSequenceTask& task) {
    task.check();
    const ImageSet pooled = task.pool > 1 ? preprocess_images(set, task.pool) : set;
    const long d = pooled.images.cols();
    const int L = task.frames;

    TaskData data;
    data.n_features = static_cast<int>(d);
    for (long n = 0; n < pooled.images.rows(); ++n) {
        Episode ep;
        ep.label = pooled.labels[n];
        ep.seed = mix64(task.seed) ^ mix64(0xEB0000 + n);
        ep.input = Mat::Zero(L, d);
        auto g = rng_stream(ep.seed, 0x3A);
        if (task.mode == MaskMode::disjoint_partition) {
            std::vector<long> idx(d);
            std::iota(idx.begin(), idx.end(), 0);
            std::shuffle(idx.begin(), idx.end(), g);
            // round-robin split: every pixel lands in exactly one frame
            for (long k = 0; k < d; ++k)
                ep.input(k % L, idx[k]) = pooled.images(n, idx[k]);
        } else {
            for (int t = 0; t < L; ++t)
                for (long k = 0; k < d; ++k)
                    if (uniform(g, 0.0, 1.0) < task.visible)
                        ep.input(t, k) = pooled.images(n, k);
        }
        data.episodes.push_back(std::move(ep));
    }
    return data;
}

MlpBaselineResult mlp_baseline(const ImageSet& train, const ImageSet& test,
                               const std::vector<int>& hidden, int epochs,
                               int batch, double lr, std::uint64_t seed) {
    if (train.images.rows() == 0 || test.images.rows() == 0)
        throw ConfigError("mlp_baseline: empty image set");
    const int dim = static_cast<int>(train.images.cols());
    const int n_classes =
        *std::max_element(train.labels.begin(), train.labels.end()) + 1;
    std::vector<int> sizes = {dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(n_classes);
    MlpParams net = make_mlp(sizes, Activation::tanh, Activation::identity, seed);

    MlpBaselineResult res;
    res.n_params = net.n_params();

    AdamOptimizer opt(lr);
    std::vector<Mat> bias_store;
    bias_store.reserve(net.biases.size());
    std::vector<Mat*> params;
    for (auto& w : net.weights) params.push_back(&w);
    for (auto& b : net.biases) {
        bias_store.emplace_back(b);
        params.push_back(&bias_store.back());
    }

    std::vector<std::size_t> order(train.images.rows());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        auto g = rng_stream(seed, 0xB0000 + epoch);
        std::shuffle(order.begin(), order.end(), g);
        double loss_sum = 0;
        long n_batches = 0;
        for (std::size_t off = 0; off < order.size();
             off += static_cast<std::size_t>(batch)) {
            const std::size_t hi =
                std::min(order.size(), off + static_cast<std::size_t>(batch));
            Mat input(dim, hi - off);
            std::vector<int> labels;
            for (std::size_t k = off; k < hi; ++k) {
                input.col(k - off) = train.images.row(order[k]).transpose();
                labels.push_back(train.labels[order[k]]);
            }
            Tape tape;
            MlpVars v = mlp_vars(tape, net, true);
            Var loss = tape.softmax_cross_entropy(
                mlp_forward(tape, net, v, tape.constant(input)), labels);
            loss_sum += tape.value(loss)(0, 0);
            ++n_batches;
            tape.backward(loss);
            std::vector<Mat> grads;
            for (Var w : v.weights) grads.push_back(tape.grad(w));
            for (Var b : v.biases) grads.push_back(tape.grad(b));
            opt.step(params, grads);
            for (std::size_t i = 0; i < net.biases.size(); ++i)
                net.biases[i] = bias_store[i].col(0);
        }
        res.loss_curve.push_back(loss_sum / std::max(1L, n_batches));
    }

    long correct = 0;
    Mat scores = mlp_forward(net, test.images.transpose());
    for (long i = 0; i < scores.cols(); ++i) {
        int arg = 0;
        scores.col(i).maxCoeff(&arg);
        correct += (arg == test.labels[i]);
    }
    res.accuracy = static_cast<double>(correct) / test.images.rows();
    return res;
}

void write_task_jsonl(const std::string& path, const TaskData& data) {
    std::ofstream out(path);
    if (!out) throw FormatError("write_task_jsonl: cannot open " + path);
    nlohmann::json header;
    header["format_version"] = "task-v1";
    header["n_features"] = data.n_features;
    header["n_classes"] = data.n_classes;
    header["n_episodes"] = data.episodes.size();
    out << header.dump() << "\n";
    for (const auto& ep : data.episodes) {
        nlohmann::json j;
        j["label"] = ep.label;
        j["seed"] = ep.seed;
        nlohmann::json frames = nlohmann::json::array();
        for (long t = 0; t < ep.input.rows(); ++t) {
            nlohmann::json row = nlohmann::json::array();
            for (long k = 0; k < ep.input.cols(); ++k) row.push_back(ep.input(t, k));
            frames.push_back(std::move(row));
        }
        j["input"] = std::move(frames);
        out << j.dump() << "\n";
    }
}

TaskData read_task_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("read_task_jsonl: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("read_task_jsonl: empty file");
    TaskData data;
    try {
        nlohmann::json header = nlohmann::json::parse(line);
        if (header.at("format_version") != "task-v1")
            throw FormatError("read_task_jsonl: unsupported format_version");
        data.n_features = header.at("n_features").get<int>();
        data.n_classes = header.at("n_classes").get<int>();
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line);
            Episode ep;
            ep.label = j.at("label").get<int>();
            ep.seed = j.at("seed").get<std::uint64_t>();
            const auto& frames = j.at("input");
            ep.input.resize(frames.size(), data.n_features);
            for (std::size_t t = 0; t < frames.size(); ++t) {
                if (static_cast<int>(frames.at(t).size()) != data.n_features)
                    throw FormatError("read_task_jsonl: frame width mismatch");
                for (int k = 0; k < data.n_features; ++k)
                    ep.input(t, k) = frames.at(t).at(k).get<double>();
            }
            if (ep.label < 0 || ep.label >= data.n_classes)
                throw FormatError("read_task_jsonl: label out of range");
            data.episodes.push_back(std::move(ep));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("read_task_jsonl: ") + e.what());
    }
    return data;
}

}  // namespace twin
