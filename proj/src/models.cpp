#include "steerbo/models.hpp"

#include <cmath>
#include <cstring>
#include <memory>

#include "steerbo/container.hpp"
#include "steerbo/errors.hpp"
#include "steerbo/numfmt.hpp"
#include "steerbo/rng.hpp"

namespace steerbo {

void STLSTMConfig::validate() const {
    for (size_t m : convlstm_maps)
        if (m == 0) throw ConfigError("ConvLSTM feature map count must be positive");
    if (conv3d_maps == 0) throw ConfigError("3d conv feature map count must be positive");
    if (fc_neurons == 0) throw ConfigError("fully connected width must be positive");
    if (dropout_rate < 0.0 || dropout_rate > 0.5)
        throw ConfigError("dropout rate must lie in [0, 0.5], got " +
                          std::to_string(dropout_rate));
    if (!(learning_rate > 0.0))
        throw ConfigError("learning rate must be positive");
    if (convlstm_kernel % 2 == 0 || conv3d_kernel % 2 == 0)
        throw ConfigError("kernels must be odd for same padding");
    if (channels == 0) throw ConfigError("input needs at least one channel");
    if (frames < 2 || height < 2 || width < 2)
        throw ConfigError("input " + std::to_string(frames) + "x" +
                          std::to_string(height) + "x" + std::to_string(width) +
                          " is too small for 2x2x2 pooling");
}

STLSTMConfig stlstm_from_configuration(const Configuration& cfg) {
    auto get = [&](const std::string& name) {
        auto it = cfg.find(name);
        if (it == cfg.end())
            throw ConfigError("configuration is missing parameter '" + name + "'");
        return it->second;
    };
    STLSTMConfig out;
    out.convlstm_maps = {static_cast<size_t>(get("convlstm1_maps")),
                         static_cast<size_t>(get("convlstm2_maps")),
                         static_cast<size_t>(get("convlstm3_maps")),
                         static_cast<size_t>(get("convlstm4_maps"))};
    out.conv3d_maps = static_cast<size_t>(get("conv3d_maps"));
    out.fc_neurons = static_cast<size_t>(get("fc_neurons"));
    out.dropout_rate = get("dropout");
    out.learning_rate = get("learning_rate");
    return out;
}

Network build_stlstm(const STLSTMConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(derive_seed(seed, 0x57AC4));

    Network net;
    net.add(std::make_unique<AffineScaleLayer>(cfg.norm_scale, cfg.norm_shift));
    size_t in_ch = cfg.channels;
    for (size_t stage = 0; stage < 4; ++stage) {
        size_t maps = cfg.convlstm_maps[stage];
        net.add(std::make_unique<ConvLSTMLayer>(in_ch, maps, cfg.convlstm_kernel,
                                                cfg.height, cfg.width,
                                                /*return_sequence=*/true, rng));
        net.add(std::make_unique<BatchNormLayer>(maps, /*axis=*/1));
        in_ch = maps;
    }
    net.add(std::make_unique<PermuteTCLayer>());
    const size_t cpad = (cfg.conv3d_kernel - 1) / 2;
    net.add(std::make_unique<Conv3DLayer>(in_ch, cfg.conv3d_maps, cfg.conv3d_kernel,
                                          cfg.conv3d_kernel, cfg.conv3d_kernel, cpad,
                                          cpad, cpad, rng));
    net.add(std::make_unique<ReluLayer>());
    net.add(std::make_unique<MaxPool3DLayer>(2, 2, 2));
    net.add(std::make_unique<FlattenLayer>());
    const size_t flat = cfg.conv3d_maps * (cfg.frames / 2) * (cfg.height / 2) *
                        (cfg.width / 2);
    net.add(std::make_unique<DenseLayer>(flat, cfg.fc_neurons, rng));
    net.add(std::make_unique<ReluLayer>());
    net.add(std::make_unique<DropoutLayer>(cfg.dropout_rate, derive_seed(seed, 0xD801)));
    net.add(std::make_unique<DenseLayer>(cfg.fc_neurons, 1, rng));
    return net;
}

namespace {

size_t strided_extent(size_t in, size_t k, size_t stride, const char* what) {
    if (in < k)
        throw ConfigError(std::string(what) + ": input extent " + std::to_string(in) +
                          " is smaller than the kernel " + std::to_string(k));
    return (in - k) / stride + 1;
}

} // namespace

Network build_pilotnet(size_t channels, size_t height, size_t width, uint64_t seed) {
    if (channels == 0) throw ConfigError("input needs at least one channel");
    Rng rng(derive_seed(seed, 0x91107));

    // three 5x5 stride-2 stages, then two 3x3 non-strided stages
    struct Stage {
        size_t maps, kernel, stride;
    };
    const Stage stages[5] = {{24, 5, 2}, {36, 5, 2}, {48, 5, 2}, {64, 3, 1}, {64, 3, 1}};

    Network net;
    net.add(std::make_unique<LastFrameLayer>());
    net.add(std::make_unique<AffineScaleLayer>(1.0, 0.0));
    size_t h = height, w = width, in_ch = channels;
    for (const Stage& st : stages) {
        h = strided_extent(h, st.kernel, st.stride, "pilotnet conv");
        w = strided_extent(w, st.kernel, st.stride, "pilotnet conv");
        net.add(std::make_unique<Conv2DLayer>(in_ch, st.maps, st.kernel, st.kernel,
                                              st.stride, 0, rng));
        net.add(std::make_unique<ReluLayer>());
        in_ch = st.maps;
    }
    net.add(std::make_unique<FlattenLayer>());
    size_t flat = in_ch * h * w;
    for (size_t fc : {size_t{100}, size_t{50}, size_t{10}}) {
        net.add(std::make_unique<DenseLayer>(flat, fc, rng));
        net.add(std::make_unique<ReluLayer>());
        flat = fc;
    }
    net.add(std::make_unique<DenseLayer>(flat, 1, rng));
    return net;
}

Network build_jnet(size_t channels, size_t height, size_t width, uint64_t seed) {
    if (channels == 0) throw ConfigError("input needs at least one channel");
    Rng rng(derive_seed(seed, 0x01E7));

    Network net;
    net.add(std::make_unique<LastFrameLayer>());
    net.add(std::make_unique<AffineScaleLayer>(1.0, 0.0));
    size_t h = height, w = width, in_ch = channels;
    for (size_t maps : {size_t{16}, size_t{32}, size_t{48}}) {
        // same-padded 3x3 conv, then a 2x2 pool
        net.add(std::make_unique<Conv2DLayer>(in_ch, maps, 3, 3, 1, 1, rng));
        net.add(std::make_unique<ReluLayer>());
        if (h < 2 || w < 2)
            throw ConfigError("jnet: input too small for its three 2x2 pools");
        net.add(std::make_unique<MaxPool2DLayer>(2, 2));
        h /= 2;
        w /= 2;
        in_ch = maps;
    }
    net.add(std::make_unique<FlattenLayer>());
    net.add(std::make_unique<DenseLayer>(in_ch * h * w, 10, rng));
    net.add(std::make_unique<ReluLayer>());
    net.add(std::make_unique<DenseLayer>(10, 1, rng));
    return net;
}

std::vector<double> predict_angles(Network& net, const std::vector<Sample>& samples) {
    // Chunked so eval on large sets does not hold every layer cache for the
    // whole dataset at once; chunking cannot change eval-mode results.
    constexpr size_t kChunk = 64;
    std::vector<double> out;
    out.reserve(samples.size());
    for (size_t begin = 0; begin < samples.size(); begin += kChunk) {
        size_t end = std::min(begin + kChunk, samples.size());
        Batch x(end - begin);
        for (size_t i = begin; i < end; ++i) x[i - begin] = samples[i].x;
        Batch y = net.forward(x, /*train=*/false);
        for (const Tensor& t : y) {
            if (t.size() != 1)
                throw ConfigError("network output is not scalar, got " +
                                  shape_str(t.shape));
            out.push_back(t.data[0]);
        }
    }
    return out;
}

double dataset_mse(Network& net, const std::vector<Sample>& samples) {
    if (samples.empty()) throw ConfigError("dataset_mse on an empty sample list");
    std::vector<double> pred = predict_angles(net, samples);
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - samples[i].label;
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

std::string weights_digest(Network& net) {
    std::string bytes;
    for (auto& [name, t] : net.named_params()) {
        bytes.append(name);
        bytes.push_back('\0');
        const char* raw = reinterpret_cast<const char*>(t->ptr());
        bytes.append(raw, raw + t->size() * sizeof(double));
    }
    return fnv1a64_hex(bytes);
}

void save_weights(const std::string& path, Network& net) {
    Container c;
    c.kind = "weights";
    c.meta = net.manifest();
    for (auto& [name, t] : net.named_params()) {
        NamedArray a;
        a.name = name;
        a.shape = t->shape;
        a.data = t->data;
        c.arrays.push_back(std::move(a));
    }
    save_container(path, c);
}

void load_weights(const std::string& path, Network& net) {
    Container c = load_container(path);
    if (c.kind != "weights")
        throw DataError(path + ": container kind '" + c.kind + "' is not weights");
    auto named = net.named_params();
    if (c.arrays.size() != named.size())
        throw DataError(path + ": container holds " + std::to_string(c.arrays.size()) +
                        " arrays, network has " + std::to_string(named.size()) +
                        " parameters");
    for (auto& [name, t] : named) {
        const NamedArray* a = c.find(name);
        if (!a) throw DataError(path + ": missing parameter '" + name + "'");
        if (a->shape != t->shape)
            throw DataError(path + ": parameter '" + name + "' has shape " +
                            shape_str(a->shape) + ", network expects " +
                            shape_str(t->shape));
        t->data = a->data;
    }
}

} // namespace steerbo
