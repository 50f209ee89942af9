#include "steerbo/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "steerbo/bo.hpp"
#include "steerbo/errors.hpp"
#include "steerbo/metrics.hpp"
#include "steerbo/models.hpp"
#include "steerbo/network.hpp"
#include "steerbo/numfmt.hpp"
#include "steerbo/objectives.hpp"
#include "steerbo/rng.hpp"
#include "steerbo/search_space.hpp"

namespace steerbo {
namespace {

constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------- files ---

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw DataError("write to '" + path + "' failed");
}

void ensure_directory(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory '" + dir + "': " + ec.message());
}

nlohmann::json load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    try {
        nlohmann::json j = nlohmann::json::parse(in);
        if (!j.is_object())
            throw ConfigError("config file '" + path + "' must hold a JSON object");
        return j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
}

// Fills option values from the JSON config file for every option the
// command line left untouched, so flags always win over the file.
class ConfigMerge {
  public:
    ConfigMerge(CLI::App* cmd, std::string config_path) : cmd_(cmd) {
        if (!config_path.empty()) file_ = load_config_file(config_path);
    }

    template <typename T>
    void pull(const std::string& flag, const std::string& key, T& slot) {
        if (file_.is_null() || cmd_->count(flag) > 0) return;
        auto it = file_.find(key);
        if (it == file_.end()) return;
        try {
            slot = it->get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("config key '" + key + "' has the wrong type");
        }
        filled_.push_back(key);
    }

    // true when the value came from either the flag or the file
    bool provided(const std::string& flag, const std::string& key) const {
        if (cmd_->count(flag) > 0) return true;
        return std::find(filled_.begin(), filled_.end(), key) != filled_.end();
    }

  private:
    CLI::App* cmd_;
    nlohmann::json file_;
    std::vector<std::string> filled_;
};

std::string config_digest(const nlohmann::json& effective) {
    return fnv1a64_hex(effective.dump());
}

void write_manifest(const std::string& dir, const std::string& command,
                    const nlohmann::json& effective) {
    nlohmann::json manifest;
    manifest["version"] = kVersion;
    manifest["command"] = command;
    manifest["config_digest"] = config_digest(effective);
    write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

// ------------------------------------------------------------- datasets ---

struct DataFlags {
    std::string dataset_path;
    size_t synth_frames = 40;
    size_t synth_height = 8;
    size_t synth_width = 16;
    uint64_t synth_seed = 1;
};

void add_data_flags(CLI::App* cmd, DataFlags& d) {
    cmd->add_option("--dataset", d.dataset_path,
                    "Cached dataset file (see preprocess / synth-data)");
    cmd->add_option("--synth-frames", d.synth_frames,
                    "Synthetic fallback: frames to generate");
    cmd->add_option("--synth-height", d.synth_height, "Synthetic fallback: frame height");
    cmd->add_option("--synth-width", d.synth_width, "Synthetic fallback: frame width");
    cmd->add_option("--synth-seed", d.synth_seed, "Synthetic fallback: generator seed");
}

void merge_data_flags(ConfigMerge& merge, DataFlags& d) {
    merge.pull("--dataset", "dataset", d.dataset_path);
    merge.pull("--synth-frames", "synth_frames", d.synth_frames);
    merge.pull("--synth-height", "synth_height", d.synth_height);
    merge.pull("--synth-width", "synth_width", d.synth_width);
    merge.pull("--synth-seed", "synth_seed", d.synth_seed);
}

nlohmann::json data_flags_json(const DataFlags& d) {
    nlohmann::json j;
    if (!d.dataset_path.empty()) {
        j["dataset"] = d.dataset_path;
    } else {
        j["synth_frames"] = d.synth_frames;
        j["synth_height"] = d.synth_height;
        j["synth_width"] = d.synth_width;
        j["synth_seed"] = d.synth_seed;
    }
    return j;
}

DatasetSplit resolve_dataset(const DataFlags& d) {
    std::vector<Sample> samples =
        d.dataset_path.empty()
            ? synth_dataset(d.synth_frames, d.synth_height, d.synth_width, d.synth_seed)
            : load_dataset(d.dataset_path);
    DatasetSplit split = split_dataset(samples);
    if (split.train.empty() || split.validation.empty())
        throw ConfigError("dataset yields an empty train or validation split (" +
                          std::to_string(samples.size()) + " samples total)");
    return split;
}

// ----------------------------------------------------------- model flags ---

struct ModelFlags {
    std::string arch = "stlstm";
    std::vector<size_t> maps = {16, 16, 16, 16};
    size_t conv3d_maps = 3;
    size_t fc_neurons = 50;
    double dropout = 0.25;
    double lr = 0.001;
    uint64_t seed = 0;
};

void add_model_flags(CLI::App* cmd, ModelFlags& m) {
    cmd->add_option("--arch", m.arch, "Architecture: stlstm, pilotnet, or jnet")
        ->capture_default_str();
    cmd->add_option("--maps", m.maps, "ConvLSTM feature maps, four values")
        ->delimiter(',')
        ->expected(4);
    cmd->add_option("--conv3d-maps", m.conv3d_maps, "3d conv feature maps");
    cmd->add_option("--fc", m.fc_neurons, "Fully connected width");
    cmd->add_option("--dropout", m.dropout, "Dropout rate in [0, 0.5]");
    cmd->add_option("--lr", m.lr, "Learning rate");
    cmd->add_option("--seed", m.seed, "Initialization / shuffle seed");
}

void merge_model_flags(ConfigMerge& merge, ModelFlags& m) {
    merge.pull("--arch", "arch", m.arch);
    merge.pull("--maps", "maps", m.maps);
    merge.pull("--conv3d-maps", "conv3d_maps", m.conv3d_maps);
    merge.pull("--fc", "fc", m.fc_neurons);
    merge.pull("--dropout", "dropout", m.dropout);
    merge.pull("--lr", "lr", m.lr);
    merge.pull("--seed", "seed", m.seed);
}

nlohmann::json model_flags_json(const ModelFlags& m) {
    nlohmann::json j;
    j["arch"] = m.arch;
    j["maps"] = m.maps;
    j["conv3d_maps"] = m.conv3d_maps;
    j["fc"] = m.fc_neurons;
    j["dropout"] = m.dropout;
    j["lr"] = m.lr;
    j["seed"] = m.seed;
    return j;
}

// Shape comes from the data, tuned fields from the flags.
Network build_network(const ModelFlags& m, const DatasetSplit& data) {
    const Tensor& probe = data.train.front().x;
    if (probe.rank() != 4)
        throw ConfigError("expected (frames, channels, height, width) samples, got " +
                          shape_str(probe.shape));
    if (m.arch == "stlstm") {
        STLSTMConfig cfg;
        if (m.maps.size() != 4) throw ConfigError("--maps needs exactly four values");
        std::copy(m.maps.begin(), m.maps.end(), cfg.convlstm_maps.begin());
        cfg.conv3d_maps = m.conv3d_maps;
        cfg.fc_neurons = m.fc_neurons;
        cfg.dropout_rate = m.dropout;
        cfg.learning_rate = m.lr;
        cfg.frames = probe.dim(0);
        cfg.channels = probe.dim(1);
        cfg.height = probe.dim(2);
        cfg.width = probe.dim(3);
        return build_stlstm(cfg, derive_seed(m.seed, 0));
    }
    if (m.arch == "pilotnet")
        return build_pilotnet(probe.dim(1), probe.dim(2), probe.dim(3), derive_seed(m.seed, 0));
    if (m.arch == "jnet")
        return build_jnet(probe.dim(1), probe.dim(2), probe.dim(3), derive_seed(m.seed, 0));
    throw ConfigError("unknown architecture '" + m.arch +
                      "' (expected stlstm, pilotnet, or jnet)");
}

// ----------------------------------------------------------------- bo-run ---

struct BoRunSettings {
    std::string config_path;
    std::string objective = "synthetic-paper-space";
    std::string command;
    double timeout_seconds = 30.0;
    DataFlags data;
    size_t epochs = 15, batch = 50, patience = 5; // toy-trainer caps
    std::string acq = "lcb,ei,mpi";
    size_t n_init = 5, n_iter = 20, runs = 10;
    uint64_t base_seed = 42;
    size_t parallel_runs = 1;
    std::string out_dir;
};

std::vector<AcquisitionKind> parse_acq_list(const std::string& list) {
    std::vector<AcquisitionKind> kinds;
    std::stringstream in(list);
    for (std::string name; std::getline(in, name, ',');) {
        if (name == "lcb") kinds.push_back(make_acquisition(AcqFamily::lcb));
        else if (name == "ei") kinds.push_back(make_acquisition(AcqFamily::ei));
        else if (name == "mpi") kinds.push_back(make_acquisition(AcqFamily::mpi));
        else throw ConfigError("unknown acquisition '" + name + "' (expected lcb, ei, or mpi)");
    }
    if (kinds.empty()) throw ConfigError("--acq names no acquisition");
    return kinds;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_bo_run(const BoRunSettings& s) {
    std::vector<AcquisitionKind> kinds = parse_acq_list(s.acq);

    ObjectiveSpec spec;
    spec.kind = parse_objective_kind(s.objective);
    spec.command = s.command;
    spec.timeout_seconds = s.timeout_seconds;
    if (spec.kind == ObjectiveKind::toy_trainer) {
        spec.data = std::make_shared<DatasetSplit>(resolve_dataset(s.data));
        spec.caps.epochs = s.epochs;
        spec.caps.batch_size = s.batch;
        spec.caps.patience = s.patience;
    }

    SearchSpace space = build_paper_space();
    Objective objective = make_objective(spec, space);

    ExperimentSummary summary = run_experiment(space, objective, kinds, s.n_init, s.n_iter,
                                               s.runs, s.base_seed, s.parallel_runs);

    ensure_directory(s.out_dir);
    for (const AcquisitionSummary& acq : summary.acquisitions) {
        const std::string name = acquisition_name(acq.kind.family);
        for (const RunLog& run : acq.runs) {
            const std::string path =
                s.out_dir + "/run_" + name + "_" + std::to_string(run.seed) + ".jsonl";
            write_text_file(path, run_log_jsonl(run, space, s.n_init, s.n_iter));
        }
    }
    write_text_file(s.out_dir + "/curves.csv", curves_csv(summary));
    write_text_file(s.out_dir + "/finals.csv", finals_csv(summary));

    // The digest covers everything that shapes the results; the output
    // location and the worker count do not.
    nlohmann::json effective;
    effective["objective"] = s.objective;
    if (spec.kind == ObjectiveKind::external_command) {
        effective["command"] = s.command;
        effective["timeout_seconds"] = s.timeout_seconds;
    }
    if (spec.kind == ObjectiveKind::toy_trainer) {
        effective["data"] = data_flags_json(s.data);
        effective["epochs"] = s.epochs;
        effective["batch"] = s.batch;
        effective["patience"] = s.patience;
    }
    effective["acq"] = s.acq;
    effective["n_init"] = s.n_init;
    effective["n_iter"] = s.n_iter;
    effective["runs"] = s.runs;
    effective["base_seed"] = s.base_seed;
    write_manifest(s.out_dir, "bo-run", effective);

    // select_acquisition throws when every run aborted; the logs and CSVs
    // above stay on disk so the failure can be diagnosed.
    AcquisitionKind selected = select_acquisition(summary);

    nlohmann::json out;
    out["selected_acquisition"] = acquisition_name(selected.family);
    out["n_init"] = s.n_init;
    out["n_iter"] = s.n_iter;
    out["n_runs"] = s.runs;
    out["base_seed"] = s.base_seed;
    out["acquisitions"] = nlohmann::json::array();
    for (const AcquisitionSummary& acq : summary.acquisitions) {
        nlohmann::json row;
        row["name"] = acquisition_name(acq.kind.family);
        row["complete"] = acq.complete;
        row["completed_runs"] = acq.final_best_seen.size();
        if (!acq.final_best_seen.empty()) {
            double mean = 0.0;
            for (double v : acq.final_best_seen) mean += v;
            mean /= static_cast<double>(acq.final_best_seen.size());
            row["final_mean"] = mean;
            row["final_median"] = median_of(acq.final_best_seen);
        }
        out["acquisitions"].push_back(row);
    }
    write_text_file(s.out_dir + "/summary.json", out.dump(2) + "\n");

    for (const AcquisitionSummary& acq : summary.acquisitions) {
        std::cout << acquisition_name(acq.kind.family) << ": "
                  << acq.final_best_seen.size() << "/" << acq.runs.size()
                  << " runs completed";
        if (!acq.final_best_seen.empty())
            std::cout << ", final median " << format_double(median_of(acq.final_best_seen));
        std::cout << "\n";
    }
    std::cout << "selected acquisition: " << acquisition_name(selected.family) << "\n";
    std::cout << "wrote " << s.out_dir << "\n";
    return 0;
}

// ------------------------------------------------------------------ train ---

struct TrainSettings {
    std::string config_path;
    ModelFlags model;
    DataFlags data;
    size_t epochs = 15, batch = 50, patience = 5;
    std::string out_dir;
};

nlohmann::json train_report_json(const TrainReport& rep) {
    nlohmann::json j;
    j["epochs_run"] = rep.epochs_run;
    j["early_stopped"] = rep.early_stopped;
    j["diverged"] = rep.diverged;
    j["best_val_mse"] = rep.best_val_mse;
    j["best_epoch"] = rep.best_epoch;
    j["weights_digest"] = rep.weights_digest;
    j["train_curve"] = rep.train_curve;
    j["val_curve"] = rep.val_curve;
    return j;
}

int cmd_train(const TrainSettings& s) {
    DatasetSplit data = resolve_dataset(s.data);
    Network net = build_network(s.model, data);

    TrainOptions opt;
    opt.lr = s.model.lr;
    opt.epochs = s.epochs;
    opt.batch_size = s.batch;
    opt.patience = s.patience;
    opt.seed = derive_seed(s.model.seed, 1);
    TrainReport rep = train(net, data, opt);

    ensure_directory(s.out_dir);
    save_weights(s.out_dir + "/weights.bin", net);
    write_text_file(s.out_dir + "/train_report.json", train_report_json(rep).dump(2) + "\n");

    nlohmann::json effective = model_flags_json(s.model);
    effective["data"] = data_flags_json(s.data);
    effective["epochs"] = s.epochs;
    effective["batch"] = s.batch;
    effective["patience"] = s.patience;
    write_manifest(s.out_dir, "train", effective);

    std::cout << "trained " << s.model.arch << " for " << rep.epochs_run << " epochs"
              << (rep.early_stopped ? " (early stop)" : "")
              << (rep.diverged ? " (diverged)" : "") << "\n";
    std::cout << "best validation mse " << format_double(rep.best_val_mse) << " at epoch "
              << rep.best_epoch << "\n";
    std::cout << "wrote " << s.out_dir << "\n";
    return rep.diverged ? 4 : 0;
}

// --------------------------------------------------------------- evaluate ---

struct EvaluateSettings {
    std::string config_path;
    ModelFlags model;
    DataFlags data;
    std::string weights_path;
    std::string out_dir;
};

std::string metrics_csv(const DatasetSplit& data, Network& net) {
    std::string out = "split,n,mse,mae,st_ae,bias_sq,variance\n";
    const std::pair<const char*, const std::vector<Sample>*> splits[] = {
        {"train", &data.train}, {"validation", &data.validation}, {"test", &data.test}};
    for (const auto& [name, samples] : splits) {
        if (samples->empty()) continue;
        std::vector<double> y;
        y.reserve(samples->size());
        for (const Sample& s : *samples) y.push_back(s.label);
        ErrorSummary es = error_summary(y, predict_angles(net, *samples));
        out += std::string(name) + "," + std::to_string(es.n) + "," + format_double(es.mse) +
               "," + format_double(es.mae) + "," + format_double(es.st_ae) + "," +
               format_double(es.bias_sq) + "," + format_double(es.variance) + "\n";
    }
    return out;
}

int cmd_evaluate(const EvaluateSettings& s) {
    DatasetSplit data = resolve_dataset(s.data);
    Network net = build_network(s.model, data);

    if (!std::filesystem::exists(s.weights_path))
        throw DataError("weights file '" + s.weights_path + "' does not exist");
    try {
        load_weights(s.weights_path, net);
    } catch (const DataError& e) {
        // The file exists but does not fit the requested architecture:
        // that is an operator configuration mistake, not broken data.
        throw ConfigError(std::string("weights do not match the requested architecture: ") +
                          e.what());
    }

    std::string csv = metrics_csv(data, net);
    std::cout << csv;
    if (!s.out_dir.empty()) {
        ensure_directory(s.out_dir);
        write_text_file(s.out_dir + "/metrics.csv", csv);

        nlohmann::json effective = model_flags_json(s.model);
        effective["data"] = data_flags_json(s.data);
        effective["weights"] = s.weights_path;
        write_manifest(s.out_dir, "evaluate", effective);
        std::cout << "wrote " << s.out_dir << "\n";
    }
    return 0;
}

// ------------------------------------------------------------- preprocess ---

struct PreprocessSettings {
    std::string config_path;
    std::string image_dir;
    std::string labels_file;
    std::string out_file;
    size_t crop_top = 80, crop_bottom = 26;
};

int cmd_preprocess(const PreprocessSettings& s) {
    std::vector<RawFrame> frames = load_frames(s.image_dir, s.labels_file);
    std::vector<Tensor> images;
    std::vector<double> angles;
    images.reserve(frames.size());
    angles.reserve(frames.size());
    for (const RawFrame& f : frames) {
        images.push_back(preprocess(f, s.crop_top, s.crop_bottom));
        angles.push_back(f.angle);
    }
    std::vector<Sample> samples = stack_frames(images, angles);
    save_dataset(s.out_file, samples);
    std::cout << "read " << frames.size() << " frames, wrote " << samples.size()
              << " stacked samples to " << s.out_file << "\n";
    return 0;
}

// -------------------------------------------------------------- synth-data ---

struct SynthDataSettings {
    size_t frames = 500, height = 66, width = 200;
    uint64_t seed = 1;
    std::string out_file;
};

int cmd_synth_data(const SynthDataSettings& s) {
    std::vector<Sample> samples = synth_dataset(s.frames, s.height, s.width, s.seed);
    save_dataset(s.out_file, samples);
    std::cout << "wrote " << samples.size() << " synthetic samples to " << s.out_file << "\n";
    return 0;
}

// -------------------------------------------------------------- gradcheck ---

Tensor random_tensor(const std::vector<size_t>& shape, Rng& rng) {
    Tensor t(shape);
    for (double& v : t.data) v = rng.uniform(-0.8, 0.8);
    return t;
}

// Nonzero peepholes so their gradient paths carry signal.
void fill_peepholes(Network& net, Rng& rng) {
    for (auto& [name, t] : net.named_params())
        if (name.find(".W_ci") != std::string::npos ||
            name.find(".W_cf") != std::string::npos ||
            name.find(".W_co") != std::string::npos)
            for (double& v : t->data) v = rng.uniform(-0.3, 0.3);
}

int cmd_gradcheck() {
    struct Check {
        std::string name;
        Network net;
        Batch x, target;
    };
    std::vector<Check> checks;

    {
        Check c;
        c.name = "conv2d + pooling + dense";
        Rng rng(41);
        c.net.add(std::make_unique<Conv2DLayer>(2, 3, 3, 3, 1, 1, rng));
        c.net.add(std::make_unique<MaxPool2DLayer>(2, 2));
        c.net.add(std::make_unique<Conv2DLayer>(3, 2, 3, 3, 2, 0, rng));
        c.net.add(std::make_unique<FlattenLayer>());
        c.net.add(std::make_unique<DenseLayer>(2, 1, rng));
        c.x.resize(2);
        c.target.resize(2);
        for (auto& t : c.x) t = random_tensor({2, 6, 6}, rng);
        for (auto& t : c.target) t = random_tensor({1}, rng);
        checks.push_back(std::move(c));
    }
    {
        Check c;
        c.name = "conv3d + temporal pooling";
        Rng rng(43);
        c.net.add(std::make_unique<Conv3DLayer>(2, 2, 3, 3, 3, 1, 1, 1, rng));
        c.net.add(std::make_unique<MaxPool3DLayer>(2, 2, 2));
        c.net.add(std::make_unique<FlattenLayer>());
        c.net.add(std::make_unique<DenseLayer>(8, 1, rng));
        c.x.resize(2);
        c.target.resize(2);
        for (auto& t : c.x) t = random_tensor({2, 3, 4, 5}, rng);
        for (auto& t : c.target) t = random_tensor({1}, rng);
        checks.push_back(std::move(c));
    }
    {
        Check c;
        c.name = "batch normalization";
        Rng rng(47);
        c.net.add(std::make_unique<Conv2DLayer>(1, 3, 3, 3, 1, 1, rng));
        c.net.add(std::make_unique<BatchNormLayer>(3, 0));
        c.net.add(std::make_unique<FlattenLayer>());
        c.net.add(std::make_unique<DenseLayer>(3 * 4 * 4, 1, rng));
        c.x.resize(3);
        c.target.resize(3);
        for (auto& t : c.x) t = random_tensor({1, 4, 4}, rng);
        for (auto& t : c.target) t = random_tensor({1}, rng);
        checks.push_back(std::move(c));
    }
    {
        Check c;
        c.name = "convlstm sequence head";
        Rng rng(53);
        c.net.add(std::make_unique<ConvLSTMLayer>(1, 2, 3, 4, 5, false, rng));
        c.net.add(std::make_unique<FlattenLayer>());
        c.net.add(std::make_unique<DenseLayer>(2 * 4 * 5, 1, rng));
        fill_peepholes(c.net, rng);
        c.x.resize(2);
        c.target.resize(2);
        for (auto& t : c.x) t = random_tensor({3, 1, 4, 5}, rng);
        for (auto& t : c.target) t = random_tensor({1}, rng);
        checks.push_back(std::move(c));
    }
    {
        Check c;
        c.name = "dropout through a frozen mask";
        Rng rng(67);
        c.net.add(std::make_unique<DenseLayer>(6, 8, rng));
        c.net.add(std::make_unique<DropoutLayer>(0.4, 71));
        c.net.add(std::make_unique<DenseLayer>(8, 1, rng));
        c.x.resize(2);
        c.target.resize(2);
        for (auto& t : c.x) t = random_tensor({6}, rng);
        for (auto& t : c.target) t = random_tensor({1}, rng);
        checks.push_back(std::move(c));
    }
    {
        Check c;
        c.name = "full spatiotemporal miniature";
        Rng rng(59);
        c.net.add(std::make_unique<AffineScaleLayer>(1.0, 0.0));
        c.net.add(std::make_unique<ConvLSTMLayer>(1, 2, 3, 4, 5, true, rng));
        c.net.add(std::make_unique<BatchNormLayer>(2, 1));
        c.net.add(std::make_unique<PermuteTCLayer>());
        c.net.add(std::make_unique<Conv3DLayer>(2, 2, 3, 3, 3, 1, 1, 1, rng));
        c.net.add(std::make_unique<MaxPool3DLayer>(2, 2, 2));
        c.net.add(std::make_unique<FlattenLayer>());
        c.net.add(std::make_unique<DenseLayer>(8, 4, rng));
        c.net.add(std::make_unique<DropoutLayer>(0.25, 61));
        c.net.add(std::make_unique<DenseLayer>(4, 1, rng));
        fill_peepholes(c.net, rng);
        c.x.resize(2);
        c.target.resize(2);
        for (auto& t : c.x) t = random_tensor({3, 1, 4, 5}, rng);
        for (auto& t : c.target) t = random_tensor({1}, rng);
        checks.push_back(std::move(c));
    }

    constexpr double kTolerance = 1e-4;
    std::vector<std::string> failed;
    for (Check& c : checks) {
        GradCheckReport rep = grad_check(c.net, c.x, c.target);
        const bool ok = rep.max_rel_err < kTolerance;
        std::cout << (ok ? "pass" : "FAIL") << "  " << c.name << ": max rel err "
                  << format_double(rep.max_rel_err) << " over " << rep.elements_checked
                  << " elements (worst " << rep.worst_param << ")\n";
        if (!ok) failed.push_back(c.name);
    }
    if (!failed.empty()) {
        std::string names;
        for (const std::string& n : failed) names += (names.empty() ? "" : ", ") + n;
        throw NumericError("gradient check failed: " + names);
    }
    std::cout << "all gradient checks passed\n";
    return 0;
}

// ------------------------------------------------------------- dispatcher ---

uint64_t env_base_seed() {
    const char* raw = std::getenv("STEERBO_SEED");
    if (raw == nullptr) return 0;
    char* end = nullptr;
    unsigned long long v = std::strtoull(raw, &end, 10);
    if (end == raw || *end != '\0')
        throw ConfigError("STEERBO_SEED must be a non-negative integer, got '" +
                          std::string(raw) + "'");
    return static_cast<uint64_t>(v);
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Hyperparameter optimization toolkit: GP-based Bayesian "
                 "optimization over a mixed search space, a spatiotemporal "
                 "sequence model, and the data pipeline feeding it"};
    app.set_version_flag("--version", std::string("steerbo ") + kVersion);
    app.require_subcommand(1);

    int exit_code = 0;

    BoRunSettings bo;
    CLI::App* bo_cmd = app.add_subcommand("bo-run", "Run the optimization experiment");
    bo_cmd->add_option("--config", bo.config_path, "JSON config file; flags win over it");
    bo_cmd->add_option("--objective", bo.objective,
                       "synthetic-paper-space, synthetic-continuous, external-command, "
                       "or toy-trainer")
        ->capture_default_str();
    bo_cmd->add_option("--command", bo.command, "Shell command for external-command");
    bo_cmd->add_option("--timeout", bo.timeout_seconds, "External command timeout, seconds");
    add_data_flags(bo_cmd, bo.data);
    bo_cmd->add_option("--epochs", bo.epochs, "Toy-trainer epoch cap");
    bo_cmd->add_option("--batch", bo.batch, "Toy-trainer batch size");
    bo_cmd->add_option("--patience", bo.patience, "Toy-trainer early-stopping patience");
    bo_cmd->add_option("--acq", bo.acq, "Comma list of acquisitions")->capture_default_str();
    bo_cmd->add_option("--n-init", bo.n_init, "Initial design size")->capture_default_str();
    bo_cmd->add_option("--n-iter", bo.n_iter, "Optimization iterations")->capture_default_str();
    bo_cmd->add_option("--runs", bo.runs, "Repetitions per acquisition")->capture_default_str();
    bo_cmd->add_option("--base-seed", bo.base_seed,
                       "First seed; run r uses base+r (default also honors STEERBO_SEED)");
    bo_cmd->add_option("--parallel-runs", bo.parallel_runs, "Worker threads across runs");
    bo_cmd->add_option("--out", bo.out_dir, "Output directory")->required();
    bo_cmd->callback([&] {
        ConfigMerge merge(bo_cmd, bo.config_path);
        merge.pull("--objective", "objective", bo.objective);
        merge.pull("--command", "command", bo.command);
        merge.pull("--timeout", "timeout", bo.timeout_seconds);
        merge_data_flags(merge, bo.data);
        merge.pull("--epochs", "epochs", bo.epochs);
        merge.pull("--batch", "batch", bo.batch);
        merge.pull("--patience", "patience", bo.patience);
        merge.pull("--acq", "acq", bo.acq);
        merge.pull("--n-init", "n_init", bo.n_init);
        merge.pull("--n-iter", "n_iter", bo.n_iter);
        merge.pull("--runs", "runs", bo.runs);
        merge.pull("--base-seed", "base_seed", bo.base_seed);
        merge.pull("--parallel-runs", "parallel_runs", bo.parallel_runs);
        if (!merge.provided("--base-seed", "base_seed") && std::getenv("STEERBO_SEED"))
            bo.base_seed = env_base_seed();
        exit_code = cmd_bo_run(bo);
    });

    TrainSettings tr;
    CLI::App* tr_cmd = app.add_subcommand("train", "Train one architecture");
    tr_cmd->add_option("--config", tr.config_path, "JSON config file; flags win over it");
    add_model_flags(tr_cmd, tr.model);
    add_data_flags(tr_cmd, tr.data);
    tr_cmd->add_option("--epochs", tr.epochs, "Epoch cap")->capture_default_str();
    tr_cmd->add_option("--batch", tr.batch, "Batch size")->capture_default_str();
    tr_cmd->add_option("--patience", tr.patience, "Early-stopping patience")
        ->capture_default_str();
    tr_cmd->add_option("--out", tr.out_dir, "Output directory")->required();
    tr_cmd->callback([&] {
        ConfigMerge merge(tr_cmd, tr.config_path);
        merge_model_flags(merge, tr.model);
        merge_data_flags(merge, tr.data);
        merge.pull("--epochs", "epochs", tr.epochs);
        merge.pull("--batch", "batch", tr.batch);
        merge.pull("--patience", "patience", tr.patience);
        exit_code = cmd_train(tr);
    });

    EvaluateSettings ev;
    CLI::App* ev_cmd = app.add_subcommand("evaluate", "Evaluate saved weights");
    ev_cmd->add_option("--config", ev.config_path, "JSON config file; flags win over it");
    add_model_flags(ev_cmd, ev.model);
    add_data_flags(ev_cmd, ev.data);
    ev_cmd->add_option("--weights", ev.weights_path, "Weights file from train")->required();
    ev_cmd->add_option("--out", ev.out_dir, "Output directory (metrics.csv)");
    ev_cmd->callback([&] {
        ConfigMerge merge(ev_cmd, ev.config_path);
        merge_model_flags(merge, ev.model);
        merge_data_flags(merge, ev.data);
        exit_code = cmd_evaluate(ev);
    });

    PreprocessSettings pp;
    CLI::App* pp_cmd = app.add_subcommand("preprocess", "Cache a dataset from raw frames");
    pp_cmd->add_option("--config", pp.config_path, "JSON config file; flags win over it");
    pp_cmd->add_option("--images", pp.image_dir, "Directory of PGM/PPM frames")->required();
    pp_cmd->add_option("--labels", pp.labels_file, "Labels file: <filename> <angle> lines")
        ->required();
    pp_cmd->add_option("--out", pp.out_file, "Cached dataset file to write")->required();
    pp_cmd->add_option("--crop-top", pp.crop_top, "Rows cropped from the top")
        ->capture_default_str();
    pp_cmd->add_option("--crop-bottom", pp.crop_bottom, "Rows cropped from the bottom")
        ->capture_default_str();
    pp_cmd->callback([&] {
        ConfigMerge merge(pp_cmd, pp.config_path);
        merge.pull("--crop-top", "crop_top", pp.crop_top);
        merge.pull("--crop-bottom", "crop_bottom", pp.crop_bottom);
        exit_code = cmd_preprocess(pp);
    });

    SynthDataSettings sd;
    CLI::App* sd_cmd = app.add_subcommand("synth-data", "Generate a synthetic dataset");
    sd_cmd->add_option("--frames", sd.frames, "Frames to generate")->capture_default_str();
    sd_cmd->add_option("--height", sd.height, "Frame height")->capture_default_str();
    sd_cmd->add_option("--width", sd.width, "Frame width")->capture_default_str();
    sd_cmd->add_option("--seed", sd.seed, "Generator seed")->capture_default_str();
    sd_cmd->add_option("--out", sd.out_file, "Dataset file to write")->required();
    sd_cmd->callback([&] { exit_code = cmd_synth_data(sd); });

    CLI::App* gc_cmd = app.add_subcommand("gradcheck", "Run the gradient check suite");
    gc_cmd->callback([&] { exit_code = cmd_gradcheck(); });

    try {
        app.parse(argc, argv);
        return exit_code;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace steerbo
