#include "nexus/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "nexus/error.hpp"

namespace nexus {

namespace {

constexpr std::size_t kModalities = 4;
constexpr std::size_t kBigPatch = 33;
constexpr std::size_t kSmallPatch = 15;
constexpr std::size_t kClasses = 5;

} // namespace

Arch arch_from_string(const std::string& name) {
    if (name == "LN") return Arch::LN;
    if (name == "TPN") return Arch::TPN;
    if (name == "TLinear") return Arch::TLinear;
    if (name == "IN") return Arch::IN;
    if (name == "ILinear") return Arch::ILinear;
    throw ParamError("unknown architecture '" + name +
                     "' (expected LN, TPN, TLinear, IN or ILinear)");
}

std::string arch_name(Arch arch) {
    switch (arch) {
        case Arch::LN: return "LN";
        case Arch::TPN: return "TPN";
        case Arch::TLinear: return "TLinear";
        case Arch::IN: return "IN";
        case Arch::ILinear: return "ILinear";
    }
    throw ParamError("invalid architecture enum");
}

std::vector<Arch> all_archs() {
    return {Arch::LN, Arch::TPN, Arch::TLinear, Arch::IN, Arch::ILinear};
}

std::string DimContract::report() const {
    std::ostringstream os;
    for (const Edge& e : edges)
        os << e.node << " (" << e.layer << ") -> " << shape_str(e.out) << "\n";
    os << "flattened features: " << flat_features << "\n";
    return os.str();
}

NexusModel::NexusModel(std::string arch, ModelConfig cfg)
    : arch_(std::move(arch)), config_(cfg) {}

int NexusModel::add_input(std::string name, Shape shape) {
    if (finalized_) throw StateError("model graph is finalized");
    Node n;
    n.name = std::move(name);
    n.input_shape = std::move(shape);
    nodes_.push_back(std::move(n));
    const int id = static_cast<int>(nodes_.size()) - 1;
    if (input_big_ < 0)
        input_big_ = id;
    else if (input_small_ < 0)
        input_small_ = id;
    else
        throw StateError("model already has two inputs");
    return id;
}

int NexusModel::add_layer(std::unique_ptr<Layer> layer, std::vector<int> inputs,
                          std::string name) {
    if (finalized_) throw StateError("model graph is finalized");
    for (int i : inputs)
        if (i < 0 || i >= static_cast<int>(nodes_.size()))
            throw ParamError("layer '" + name + "' references unknown node " + std::to_string(i));
    if (auto* bn = dynamic_cast<BatchNormLayer*>(layer.get())) bn_layers_.push_back(bn);
    Node n;
    n.name = std::move(name);
    n.layer = std::move(layer);
    n.inputs = std::move(inputs);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

void NexusModel::finalize() {
    if (finalized_) return;
    if (input_big_ < 0 || input_small_ < 0 || output_node_ < 0 || dense_node_ < 0)
        throw StateError("model graph incomplete: inputs, output dense and output required");
    registry_.clear();
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!nodes_[i].layer) continue;
        std::vector<ParamRef> refs;
        nodes_[i].layer->collect_params(refs);
        const bool is_output = static_cast<int>(i) == dense_node_;
        for (ParamRef& r : refs) registry_.push_back({r, is_output});
    }
    finalized_ = true;
}

void NexusModel::require_finalized() const {
    if (!finalized_) throw StateError("model graph not finalized");
}

DimContract NexusModel::check_dims() const {
    require_finalized();
    DimContract contract;
    std::vector<Shape> shapes(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        if (!n.layer) {
            Shape s = n.input_shape;
            s.insert(s.begin(), 1); // symbolic batch of one
            shapes[i] = s;
        } else {
            std::vector<Shape> ins;
            ins.reserve(n.inputs.size());
            for (int j : n.inputs) ins.push_back(shapes[j]);
            try {
                shapes[i] = n.layer->out_shape(ins);
            } catch (const ShapeError& e) {
                throw ShapeError("dimension contract violated at node '" + n.name +
                                 "': " + e.what());
            }
        }
        Shape logical = shapes[i];
        if (!logical.empty() && logical.front() == 1) logical.erase(logical.begin());
        contract.edges.push_back(
            {n.name, n.layer ? n.layer->describe() : "input " + shape_str(n.input_shape),
             logical});
    }

    auto expect = [&](int node, const Shape& want, const std::string& what) {
        if (node < 0) throw StateError("contract node for " + what + " not marked");
        if (shapes[node] != want)
            throw ShapeError("dimension contract violated: " + what + " at node '" +
                             nodes_[node].name + "' is " + shape_str(shapes[node]) +
                             ", expected " + shape_str(want));
    };

    expect(input_big_, {1, kModalities, kBigPatch, kBigPatch}, "big input");
    expect(input_small_, {1, kModalities, kSmallPatch, kSmallPatch}, "small input");
    expect(fh_out_node_, {1, kClasses, kSmallPatch, kSmallPatch}, "first-half output");
    expect(concat_node_, {1, kClasses + kModalities, kSmallPatch, kSmallPatch},
           "nine-plane concatenation");
    expect(output_node_, {1, kClasses}, "class probabilities");
    if (flatten_node_ < 0) throw StateError("contract node for flatten not marked");
    contract.flat_features = shapes[flatten_node_][1];
    return contract;
}

Tensor NexusModel::forward_batch(const Tensor& big, const Tensor& small, Mode mode, Rng* rng) {
    require_finalized();
    auto check_input = [&](const Tensor& t, int node, const char* which) {
        const Shape& want = nodes_[node].input_shape;
        Shape got = t.shape();
        if (got.size() != want.size() + 1 ||
            !std::equal(want.begin(), want.end(), got.begin() + 1))
            throw ShapeError(std::string(which) + " input " + shape_str(got) +
                             " does not match contract " + shape_str(want));
    };
    check_input(big, input_big_, "big");
    check_input(small, input_small_, "small");
    if (big.extent(0) != small.extent(0))
        throw ShapeError("big and small batches differ in size");

    std::vector<Tensor> outputs(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        Node& n = nodes_[i];
        if (!n.layer) {
            outputs[i] = (static_cast<int>(i) == input_big_) ? big : small;
            continue;
        }
        std::vector<const Tensor*> ins;
        ins.reserve(n.inputs.size());
        for (int j : n.inputs) ins.push_back(&outputs[j]);
        outputs[i] = n.layer->forward(ins, mode, rng);
    }
    return outputs[static_cast<std::size_t>(output_node_)];
}

void NexusModel::backward(const Tensor& grad_logits) {
    require_finalized();
    std::vector<Tensor> grads(nodes_.size());
    std::vector<bool> has_grad(nodes_.size(), false);

    // The output softmax is fused with the NLL loss, so the seed gradient
    // applies to the dense node's output and the softmax node is skipped.
    grads[static_cast<std::size_t>(dense_node_)] = grad_logits;
    has_grad[static_cast<std::size_t>(dense_node_)] = true;

    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.layer || !has_grad[i]) continue;
        std::vector<Tensor> input_grads = n.layer->backward(grads[i]);
        if (input_grads.size() != n.inputs.size())
            throw StateError("node '" + n.name + "' returned wrong gradient count");
        for (std::size_t j = 0; j < n.inputs.size(); ++j) {
            const auto target = static_cast<std::size_t>(n.inputs[j]);
            if (!nodes_[target].layer) continue; // input nodes absorb gradients
            if (has_grad[target]) {
                Tensor& acc = grads[target];
                const double* add = input_grads[j].data();
                double* dst = acc.data();
                for (std::size_t t = 0; t < acc.size(); ++t) dst[t] += add[t];
            } else {
                grads[target] = std::move(input_grads[j]);
                has_grad[target] = true;
            }
        }
        grads[i] = Tensor(); // release as soon as consumed
    }
}

void NexusModel::backward_output_only(const Tensor& grad_logits) {
    require_finalized();
    nodes_[static_cast<std::size_t>(dense_node_)].layer->backward(grad_logits);
}

void NexusModel::set_bn_stats_frozen(bool frozen) {
    for (BatchNormLayer* bn : bn_layers_) bn->set_freeze_stats(frozen);
}

std::uint64_t NexusModel::digest() const {
    std::ostringstream os;
    os << arch_ << "|w=" << config_.width_scale << "|d=" << config_.drop_first << ","
       << config_.drop_second << "," << config_.drop_final << "|bn=" << config_.bn_eps << ","
       << config_.bn_momentum << "|init=" << config_.init_std << ","
       << config_.classifier_std << "|ob=" << config_.output_bias << "\n";
    for (const Node& n : nodes_) {
        os << n.name << ":";
        if (n.layer)
            os << n.layer->describe();
        else
            os << "input " << shape_str(n.input_shape);
        for (int j : n.inputs) os << "<" << j;
        os << "\n";
    }
    const std::string s = os.str();
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

// ------------------------------------------------------------------ builder

namespace {

struct Feed {
    int node;
    std::size_t channels;
};

/// Shared assembly helpers for the reference architectures.
struct Assembler {
    NexusModel& m;
    const ModelConfig& cfg;
    Rng& rng;
    int counter = 0;

    std::size_t width(std::size_t maps) const {
        const auto w = static_cast<std::size_t>(
            std::lround(static_cast<double>(maps) * cfg.width_scale));
        return std::max<std::size_t>(1, w);
    }

    std::string tag(const std::string& base) {
        return base + "#" + std::to_string(counter++);
    }

    double classifier_std(std::size_t fan_in) const {
        if (cfg.classifier_std > 0.0) return cfg.classifier_std;
        if (cfg.init_std > 0.0) return cfg.init_std;
        return std::sqrt(2.0 / static_cast<double>(fan_in));
    }

    Feed conv(Feed in, std::size_t maps, std::size_t k, const std::string& name,
              bool classifier = false, double bias_fill = 0.0) {
        if (k % 2 == 0) throw ParamError("architecture convolutions use odd kernels");
        const std::size_t out_maps = classifier ? maps : width(maps);
        auto layer = std::make_unique<ConvLayer>(in.channels, out_maps, k, name);
        if (classifier)
            layer->init_gaussian(rng, classifier_std(in.channels * k * k));
        else if (cfg.init_std > 0.0)
            layer->init_gaussian(rng, cfg.init_std);
        else
            layer->init_he(rng);
        layer->biases().fill(bias_fill);
        const int id = m.add_layer(std::move(layer), {in.node}, name);
        return {id, out_maps};
    }

    /// conv -> batchnorm -> ReLU -> dropout with the given drop fraction.
    Feed block(Feed in, std::size_t maps, std::size_t k, double drop_rate,
               const std::string& base) {
        Feed f = conv(in, maps, k, tag(base + ".conv" + std::to_string(k)));
        f.node = m.add_layer(
            std::make_unique<BatchNormLayer>(f.channels, cfg.bn_eps, cfg.bn_momentum,
                                             tag(base + ".bn")),
            {f.node}, tag(base + ".bn"));
        f.node = m.add_layer(std::make_unique<ReluLayer>(tag(base + ".relu")), {f.node},
                             tag(base + ".relu"));
        f.node = m.add_layer(std::make_unique<DropoutLayer>(1.0 - drop_rate, tag(base + ".drop")),
                             {f.node}, tag(base + ".drop"));
        return f;
    }

    Feed pool(Feed in, std::size_t p, std::size_t s, const std::string& name) {
        const int id = m.add_layer(std::make_unique<PoolLayer>(p, s, name), {in.node}, name);
        return {id, in.channels};
    }

    Feed concat(const std::vector<Feed>& feeds, const std::string& name) {
        std::vector<int> ins;
        std::size_t ch = 0;
        for (const Feed& f : feeds) {
            ins.push_back(f.node);
            ch += f.channels;
        }
        const int id = m.add_layer(std::make_unique<ConcatLayer>(name), ins, name);
        return {id, ch};
    }

    /// 1x1 projection to the 5 class maps plus per-position softmax; the
    /// first half's output is a probability map at every spatial position.
    Feed first_half_head(Feed in) {
        Feed f = conv(in, kClasses, 1, "fh.project", /*classifier=*/true);
        const int sm = m.add_layer(std::make_unique<SpatialSoftmaxLayer>("fh.softmax"),
                                   {f.node}, "fh.softmax");
        m.mark_first_half_output(sm);
        return {sm, kClasses};
    }

    /// flatten -> dropout -> dense(5) -> softmax; marks the output layer.
    void classifier_tail(Feed in, std::size_t spatial) {
        const int fl = m.add_layer(std::make_unique<FlattenLayer>("sh.flatten"), {in.node},
                                   "sh.flatten");
        m.mark_flatten(fl);
        const int dp = m.add_layer(
            std::make_unique<DropoutLayer>(1.0 - cfg.drop_final, "sh.drop_final"), {fl},
            "sh.drop_final");
        const std::size_t features = in.channels * spatial * spatial;
        auto dense = std::make_unique<DenseLayer>(features, kClasses, "sh.dense");
        dense->init_gaussian(rng, classifier_std(features));
        dense->biases().fill(cfg.output_bias);
        const int dn = m.add_layer(std::move(dense), {dp}, "sh.dense");
        m.mark_output_dense(dn);
        const int sm = m.add_layer(std::make_unique<SoftmaxLayer>("sh.softmax"), {dn},
                                   "sh.softmax");
        m.mark_output(sm);
    }

    // First halves: 4x33x33 -> 5x15x15.

    Feed first_half_ln(Feed big) {
        Feed f = block(big, 64, 13, cfg.drop_first, "fh");
        f = block(f, 64, 7, cfg.drop_first, "fh");
        return first_half_head(f);
    }

    Feed first_half_tpn(Feed big) {
        Feed a = block(big, 64, 13, cfg.drop_first, "fh.a"); // 33 -> 21
        a = block(a, 64, 7, cfg.drop_first, "fh.a");         // 21 -> 15
        Feed b = block(big, 64, 7, cfg.drop_first, "fh.b");  // 33 -> 27
        b = block(b, 64, 3, cfg.drop_first, "fh.b");         // 27 -> 25
        b = pool(b, 11, 1, "fh.b.pool");                     // 25 -> 15
        return first_half_head(concat({a, b}, "fh.concat"));
    }

    Feed first_half_in(Feed big) {
        Feed p1 = block(big, 64, 13, cfg.drop_first, "fh.p1"); // 33 -> 21
        p1 = block(p1, 64, 7, cfg.drop_first, "fh.p1");        // 21 -> 15
        Feed p2 = block(big, 64, 9, cfg.drop_first, "fh.p2");  // 33 -> 25
        p2 = block(p2, 64, 11, cfg.drop_first, "fh.p2");       // 25 -> 15
        Feed p3 = block(big, 64, 5, cfg.drop_first, "fh.p3");  // 33 -> 29
        p3 = block(p3, 64, 5, cfg.drop_first, "fh.p3");        // 29 -> 25
        p3 = block(p3, 64, 5, cfg.drop_first, "fh.p3");        // 25 -> 21
        p3 = block(p3, 64, 7, cfg.drop_first, "fh.p3");        // 21 -> 15
        return first_half_head(concat({p1, p2, p3}, "fh.concat"));
    }

    // Second halves: 9x15x15 -> probabilities over the 5 classes.

    void second_half_ln(Feed nine) {
        Feed f = block(nine, 64, 7, cfg.drop_second, "sh");  // 15 -> 9
        f = block(f, 64, 5, cfg.drop_second, "sh");          // 9 -> 5
        f = block(f, 128, 3, cfg.drop_second, "sh");         // 5 -> 3
        classifier_tail(f, 3);
    }

    void second_half_tpn(Feed nine) {
        Feed a = block(nine, 64, 7, cfg.drop_second, "sh.a"); // 15 -> 9
        a = block(a, 64, 7, cfg.drop_second, "sh.a");         // 9 -> 3
        Feed b = block(nine, 64, 5, cfg.drop_second, "sh.b"); // 15 -> 11
        b = block(b, 64, 5, cfg.drop_second, "sh.b");         // 11 -> 7
        b = block(b, 64, 5, cfg.drop_second, "sh.b");         // 7 -> 3
        classifier_tail(concat({a, b}, "sh.concat"), 3);
    }

    void second_half_in(Feed nine) {
        Feed p1 = block(nine, 64, 7, cfg.drop_second, "sh.p1"); // 15 -> 9
        p1 = block(p1, 48, 7, cfg.drop_second, "sh.p1");        // 9 -> 3
        Feed p2 = block(nine, 64, 5, cfg.drop_second, "sh.p2"); // 15 -> 11
        p2 = block(p2, 64, 5, cfg.drop_second, "sh.p2");        // 11 -> 7
        p2 = block(p2, 48, 5, cfg.drop_second, "sh.p2");        // 7 -> 3
        Feed p3 = block(nine, 32, 13, cfg.drop_second, "sh.p3"); // 15 -> 3
        classifier_tail(concat({p1, p2, p3}, "sh.concat"), 3);
    }
};

} // namespace

NexusModel build_model(Arch arch, const ModelConfig& cfg, Rng& rng) {
    if (cfg.width_scale <= 0.0) throw ParamError("width_scale must be positive");
    for (double d : {cfg.drop_first, cfg.drop_second, cfg.drop_final})
        if (d < 0.0 || d >= 1.0) throw ParamError("drop rates must be in [0, 1)");

    NexusModel m(arch_name(arch), cfg);
    Assembler as{m, cfg, rng};

    const Feed big{m.add_input("input.big", {kModalities, kBigPatch, kBigPatch}), kModalities};
    const Feed small{m.add_input("input.small", {kModalities, kSmallPatch, kSmallPatch}),
                     kModalities};

    Feed fh{-1, 0};
    switch (arch) {
        case Arch::LN: fh = as.first_half_ln(big); break;
        case Arch::TPN:
        case Arch::TLinear: fh = as.first_half_tpn(big); break;
        case Arch::IN:
        case Arch::ILinear: fh = as.first_half_in(big); break;
    }

    const Feed nine = as.concat({fh, small}, "nexus.concat");
    m.mark_concat(nine.node);

    switch (arch) {
        case Arch::LN:
        case Arch::TLinear:
        case Arch::ILinear: as.second_half_ln(nine); break;
        case Arch::TPN: as.second_half_tpn(nine); break;
        case Arch::IN: as.second_half_in(nine); break;
    }

    m.finalize();
    return m;
}

Tensor forward(NexusModel& model, const Tensor& patch33, const Tensor& patch15, Mode mode,
               Rng* rng) {
    if (patch33.rank() != 3 || patch15.rank() != 3)
        throw ShapeError("forward: patches must be rank-3 [planes, H, W]");
    Shape sb = patch33.shape(), ss = patch15.shape();
    sb.insert(sb.begin(), 1);
    ss.insert(ss.begin(), 1);
    const Tensor big = patch33.reshaped(sb), small = patch15.reshaped(ss);
    Tensor out = model.forward_batch(big, small, mode, rng);
    return out.reshaped({out.extent(1)});
}

// -------------------------------------------------------------- checkpoints

namespace {

constexpr char kCkptMagic[4] = {'N', 'X', 'C', 'K'};
constexpr std::uint32_t kCkptVersion = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.write(buf, sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    char buf[sizeof(T)];
    in.read(buf, sizeof(T));
    if (!in) throw IoError("checkpoint: truncated stream");
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

void read_header(std::istream& in, std::string& name, std::uint64_t& digest) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCkptMagic, 4) != 0)
        throw IoError("checkpoint: bad magic, expected NXCK");
    const auto version = read_le<std::uint32_t>(in);
    if (version != kCkptVersion)
        throw VersionError("checkpoint: unsupported format version " + std::to_string(version));
    const auto len = read_le<std::uint32_t>(in);
    if (len > 64) throw IoError("checkpoint: implausible name length");
    name.resize(len);
    in.read(name.data(), len);
    digest = read_le<std::uint64_t>(in);
    if (!in) throw IoError("checkpoint: truncated header");
}

} // namespace

void save_checkpoint(const NexusModel& model, std::ostream& out) {
    out.write(kCkptMagic, 4);
    write_le<std::uint32_t>(out, kCkptVersion);
    const std::string& name = model.arch();
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<std::uint64_t>(out, model.digest());
    for (const RegistryEntry& e : model.registry()) e.ref.value->write(out);
    if (!out) throw IoError("checkpoint write failed");
}

void save_checkpoint(const NexusModel& model, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint for writing: " + path);
    save_checkpoint(model, f);
}

void load_checkpoint(NexusModel& model, std::istream& in) {
    std::string name;
    std::uint64_t digest = 0;
    read_header(in, name, digest);
    if (name != model.arch())
        throw VersionError("checkpoint holds architecture '" + name + "', model is '" +
                           model.arch() + "'");
    if (digest != model.digest())
        throw VersionError("checkpoint config digest mismatch for architecture '" + name +
                           "' (different build configuration)");
    for (RegistryEntry& e : model.registry()) {
        Tensor t = Tensor::read(in);
        if (!t.same_shape(*e.ref.value))
            throw VersionError("checkpoint tensor shape mismatch at " + e.ref.name);
        *e.ref.value = std::move(t);
    }
}

void load_checkpoint(NexusModel& model, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path);
    load_checkpoint(model, f);
}

std::string checkpoint_arch(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path);
    std::string name;
    std::uint64_t digest = 0;
    read_header(f, name, digest);
    return name;
}

} // namespace nexus
