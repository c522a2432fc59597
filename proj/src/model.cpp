#include "colearn/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "colearn/binary_io.hpp"
#include "colearn/errors.hpp"

namespace colearn {

namespace {

constexpr std::uint32_t kModelVersion = 1;

bool finite_all(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void apply_dense(const DenseLayer& layer, std::span<const double> in, std::span<double> out) {
    const std::size_t rows = layer.out_dim();
    for (std::size_t r = 0; r < rows; ++r) {
        out[r] = layer.bias[r] + dot(layer.weight.row(r), in);
    }
}

void apply_linear(const LinearClassifier& clf, std::span<const double> in, std::span<double> out) {
    for (std::size_t r = 0; r < clf.num_classes(); ++r) {
        out[r] = clf.bias[r] + dot(clf.weight.row(r), in);
    }
}

// Activations of every layer for one input; acts[0] is the input and
// acts.back() the features.
std::vector<Vector> extractor_activations(const MlpExtractor& ex, std::span<const double> x) {
    std::vector<Vector> acts;
    acts.reserve(ex.layers.size() + 1);
    acts.emplace_back(x.begin(), x.end());
    for (std::size_t l = 0; l < ex.layers.size(); ++l) {
        Vector out(ex.layers[l].out_dim());
        apply_dense(ex.layers[l], acts.back(), out);
        if (l + 1 < ex.layers.size()) {
            for (double& v : out) v = std::tanh(v);
        }
        acts.push_back(std::move(out));
    }
    return acts;
}

void check_input(const AdaptationModel& model, std::span<const double> x) {
    if (x.size() != model.input_dim()) {
        throw InvalidArgument("input has length " + std::to_string(x.size()) +
                              ", model expects " + std::to_string(model.input_dim()));
    }
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw InvalidArgument(std::string(what) + ": gradient shape does not match parameter shape");
    }
}

void momentum_update(std::span<double> param, std::span<const double> grad, std::span<double> vel,
                     double lr, double momentum) {
    for (std::size_t i = 0; i < param.size(); ++i) {
        vel[i] = momentum * vel[i] + grad[i];
        param[i] -= lr * vel[i];
    }
}

DenseLayer zero_layer(std::size_t out, std::size_t in) { return {Matrix(out, in), Vector(out, 0.0)}; }

DenseLayer random_layer(std::size_t out, std::size_t in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    DenseLayer layer = zero_layer(out, in);
    for (double& w : layer.weight.data()) w = rng.uniform(-bound, bound);
    for (double& b : layer.bias) b = rng.uniform(-bound, bound);
    return layer;
}

}  // namespace

std::size_t MlpExtractor::input_dim() const {
    if (layers.empty()) throw InvalidArgument("extractor has no layers");
    return layers.front().in_dim();
}

std::size_t MlpExtractor::feature_dim() const {
    if (layers.empty()) throw InvalidArgument("extractor has no layers");
    return layers.back().out_dim();
}

std::vector<std::size_t> MlpExtractor::dims() const {
    std::vector<std::size_t> d{input_dim()};
    for (const auto& l : layers) d.push_back(l.out_dim());
    return d;
}

void MlpExtractor::validate() const {
    if (layers.empty()) throw InvalidArgument("extractor has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.in_dim() == 0 || layer.out_dim() == 0) {
            throw InvalidArgument("layer " + std::to_string(l) + " has a zero dimension");
        }
        if (layer.bias.size() != layer.out_dim()) {
            throw InvalidArgument("layer " + std::to_string(l) + " bias length mismatch");
        }
        if (l > 0 && layer.in_dim() != layers[l - 1].out_dim()) {
            throw InvalidArgument("layer " + std::to_string(l) + " does not chain with layer " +
                                  std::to_string(l - 1));
        }
        if (!layer.weight.all_finite() || !finite_all(layer.bias)) {
            throw InvalidArgument("layer " + std::to_string(l) + " has non-finite parameters");
        }
    }
}

void AdaptationModel::validate() const {
    extractor.validate();
    if (classifier.num_classes() == 0) throw InvalidArgument("classifier has no classes");
    if (classifier.feature_dim() != extractor.feature_dim()) {
        throw InvalidArgument("classifier expects " + std::to_string(classifier.feature_dim()) +
                              " features, extractor produces " +
                              std::to_string(extractor.feature_dim()));
    }
    if (classifier.bias.size() != classifier.num_classes()) {
        throw InvalidArgument("classifier bias length mismatch");
    }
    if (!classifier.weight.all_finite() || !finite_all(classifier.bias)) {
        throw InvalidArgument("classifier has non-finite parameters");
    }
}

ForwardResult forward(const AdaptationModel& model, std::span<const double> x) {
    check_input(model, x);
    ForwardResult r;
    r.features = std::move(extractor_activations(model.extractor, x).back());
    r.logits.resize(model.num_classes());
    apply_linear(model.classifier, r.features, r.logits);
    r.probs = softmax(r.logits, 1.0);
    return r;
}

BatchForward forward_batch(const AdaptationModel& model, const Matrix& inputs) {
    if (inputs.cols() != model.input_dim()) {
        throw InvalidArgument("inputs have " + std::to_string(inputs.cols()) +
                              " columns, model expects " + std::to_string(model.input_dim()));
    }
    BatchForward out{Matrix(inputs.rows(), model.feature_dim()),
                     Matrix(inputs.rows(), model.num_classes()),
                     Matrix(inputs.rows(), model.num_classes())};
    for (std::size_t i = 0; i < inputs.rows(); ++i) {
        const ForwardResult r = forward(model, inputs.row(i));
        std::copy(r.features.begin(), r.features.end(), out.features.row(i).begin());
        std::copy(r.logits.begin(), r.logits.end(), out.logits.row(i).begin());
        std::copy(r.probs.begin(), r.probs.end(), out.probs.row(i).begin());
    }
    return out;
}

Gradients Gradients::zeros_like(const AdaptationModel& model, bool with_classifier) {
    Gradients g;
    for (const auto& l : model.extractor.layers) g.extractor.push_back(zero_layer(l.out_dim(), l.in_dim()));
    if (with_classifier) {
        g.classifier = LinearClassifier{Matrix(model.num_classes(), model.feature_dim()),
                                        Vector(model.num_classes(), 0.0)};
    }
    return g;
}

Gradients& Gradients::operator*=(double s) {
    for (auto& l : extractor) {
        for (double& w : l.weight.data()) w *= s;
        for (double& b : l.bias) b *= s;
    }
    if (classifier) {
        for (double& w : classifier->weight.data()) w *= s;
        for (double& b : classifier->bias) b *= s;
    }
    return *this;
}

Gradients& Gradients::operator+=(const Gradients& other) {
    if (other.extractor.size() != extractor.size() ||
        other.classifier.has_value() != classifier.has_value()) {
        throw InvalidArgument("gradient structures differ");
    }
    for (std::size_t l = 0; l < extractor.size(); ++l) {
        check_same_shape(extractor[l].weight, other.extractor[l].weight, "gradient sum");
        auto w = extractor[l].weight.data();
        auto ow = other.extractor[l].weight.data();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] += ow[i];
        for (std::size_t i = 0; i < extractor[l].bias.size(); ++i) extractor[l].bias[i] += other.extractor[l].bias[i];
    }
    if (classifier) {
        check_same_shape(classifier->weight, other.classifier->weight, "gradient sum");
        auto w = classifier->weight.data();
        auto ow = other.classifier->weight.data();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] += ow[i];
        for (std::size_t i = 0; i < classifier->bias.size(); ++i) classifier->bias[i] += other.classifier->bias[i];
    }
    return *this;
}

LossAndGradients soft_cross_entropy_grad(const AdaptationModel& model,
                                         std::span<const SoftSample> batch,
                                         bool with_classifier) {
    LossAndGradients out{0.0, Gradients::zeros_like(model, with_classifier)};
    const std::size_t classes = model.num_classes();
    const auto& layers = model.extractor.layers;

    for (const SoftSample& s : batch) {
        check_input(model, s.input);
        if (s.target.size() != classes) throw InvalidArgument("target length does not match class count");

        const std::vector<Vector> acts = extractor_activations(model.extractor, s.input);
        const Vector& features = acts.back();
        Vector logits(classes);
        apply_linear(model.classifier, features, logits);

        // log-softmax, max-subtracted
        const double mx = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (double g : logits) z += std::exp(g - mx);
        const double log_z = mx + std::log(z);
        double target_mass = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            target_mass += s.target[c];
            if (s.target[c] != 0.0) out.loss -= s.target[c] * (logits[c] - log_z);
        }

        // dL/dlogits = p * sum(t) - t
        Vector delta(classes);
        for (std::size_t c = 0; c < classes; ++c) {
            delta[c] = std::exp(logits[c] - log_z) * target_mass - s.target[c];
        }

        if (out.grads.classifier) {
            auto& gc = *out.grads.classifier;
            for (std::size_t c = 0; c < classes; ++c) {
                auto row = gc.weight.row(c);
                for (std::size_t j = 0; j < features.size(); ++j) row[j] += delta[c] * features[j];
                gc.bias[c] += delta[c];
            }
        }

        // Into the features through the classifier.
        Vector back(features.size(), 0.0);
        for (std::size_t c = 0; c < classes; ++c) {
            const auto row = model.classifier.weight.row(c);
            for (std::size_t j = 0; j < back.size(); ++j) back[j] += row[j] * delta[c];
        }

        for (std::size_t l = layers.size(); l-- > 0;) {
            const Vector& in = acts[l];
            auto& g = out.grads.extractor[l];
            for (std::size_t r = 0; r < back.size(); ++r) {
                auto row = g.weight.row(r);
                for (std::size_t j = 0; j < in.size(); ++j) row[j] += back[r] * in[j];
                g.bias[r] += back[r];
            }
            if (l == 0) break;
            // acts[l] = tanh(z) for hidden layers, so tanh' = 1 - acts[l]^2.
            Vector prev(in.size(), 0.0);
            for (std::size_t r = 0; r < back.size(); ++r) {
                const auto row = layers[l].weight.row(r);
                for (std::size_t j = 0; j < prev.size(); ++j) prev[j] += row[j] * back[r];
            }
            for (std::size_t j = 0; j < prev.size(); ++j) prev[j] *= 1.0 - in[j] * in[j];
            back = std::move(prev);
        }
    }
    return out;
}

LossAndGradients cross_entropy_grad(const AdaptationModel& model,
                                    std::span<const LabeledSample> batch) {
    const std::size_t classes = model.num_classes();
    std::vector<Vector> targets;
    std::vector<SoftSample> soft;
    targets.reserve(batch.size());
    soft.reserve(batch.size());
    for (const auto& s : batch) {
        if (s.label >= classes) {
            throw InvalidArgument("label " + std::to_string(s.label) + " out of range for " +
                                  std::to_string(classes) + " classes");
        }
        Vector t(classes, 0.0);
        t[s.label] = 1.0;
        targets.push_back(std::move(t));
    }
    for (std::size_t i = 0; i < batch.size(); ++i) soft.push_back({batch[i].input, targets[i]});
    return soft_cross_entropy_grad(model, soft, false);
}

SgdState SgdState::for_model(const AdaptationModel& model, double learning_rate, double momentum) {
    SgdState s;
    s.learning_rate = learning_rate;
    s.momentum = momentum;
    const Gradients z = Gradients::zeros_like(model, !model.classifier_frozen);
    s.velocity = z.extractor;
    s.classifier_velocity = z.classifier;
    return s;
}

void sgd_step(AdaptationModel& model, const Gradients& grads, SgdState& opt) {
    auto& layers = model.extractor.layers;
    if (grads.extractor.size() != layers.size()) {
        throw InvalidArgument("gradient has " + std::to_string(grads.extractor.size()) +
                              " layers, model has " + std::to_string(layers.size()));
    }
    if (opt.velocity.empty()) {
        for (const auto& l : layers) opt.velocity.push_back(zero_layer(l.out_dim(), l.in_dim()));
    }
    if (opt.velocity.size() != layers.size()) throw InvalidArgument("optimizer state layer count mismatch");

    for (std::size_t l = 0; l < layers.size(); ++l) {
        check_same_shape(layers[l].weight, grads.extractor[l].weight, "sgd_step");
        check_same_shape(layers[l].weight, opt.velocity[l].weight, "sgd_step velocity");
        if (grads.extractor[l].bias.size() != layers[l].bias.size()) {
            throw InvalidArgument("sgd_step: bias gradient length mismatch");
        }
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        momentum_update(layers[l].weight.data(), grads.extractor[l].weight.data(),
                        opt.velocity[l].weight.data(), opt.learning_rate, opt.momentum);
        momentum_update(layers[l].bias, grads.extractor[l].bias, opt.velocity[l].bias,
                        opt.learning_rate, opt.momentum);
    }

    if (model.classifier_frozen || !grads.classifier) return;
    auto& clf = model.classifier;
    check_same_shape(clf.weight, grads.classifier->weight, "sgd_step classifier");
    if (!opt.classifier_velocity) {
        opt.classifier_velocity = LinearClassifier{Matrix(clf.num_classes(), clf.feature_dim()),
                                                   Vector(clf.num_classes(), 0.0)};
    }
    momentum_update(clf.weight.data(), grads.classifier->weight.data(),
                    opt.classifier_velocity->weight.data(), opt.learning_rate, opt.momentum);
    momentum_update(clf.bias, grads.classifier->bias, opt.classifier_velocity->bias,
                    opt.learning_rate, opt.momentum);
}

MlpExtractor init_extractor(std::span<const std::size_t> dims, Rng& rng) {
    if (dims.size() < 2) throw InvalidArgument("extractor needs at least input and output dims");
    for (std::size_t d : dims) {
        if (d == 0) throw InvalidArgument("extractor dims must be positive");
    }
    MlpExtractor ex;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        ex.layers.push_back(random_layer(dims[l + 1], dims[l], rng));
    }
    return ex;
}

LinearClassifier init_classifier(std::size_t feature_dim, std::size_t num_classes, Rng& rng) {
    if (feature_dim == 0 || num_classes == 0) throw InvalidArgument("classifier dims must be positive");
    DenseLayer l = random_layer(num_classes, feature_dim, rng);
    return {std::move(l.weight), std::move(l.bias)};
}

AdaptationModel init_model(std::span<const std::size_t> extractor_dims, std::size_t num_classes,
                           Rng& rng) {
    AdaptationModel m;
    m.extractor = init_extractor(extractor_dims, rng);
    m.classifier = init_classifier(m.extractor.feature_dim(), num_classes, rng);
    return m;
}

std::string encode_model(const AdaptationModel& model) {
    model.validate();
    ByteWriter w;
    w.magic("CFMD");
    w.u32(kModelVersion);
    const auto dims = model.extractor.dims();
    w.u32(static_cast<std::uint32_t>(model.extractor.layers.size()));
    for (std::size_t d : dims) w.u32(static_cast<std::uint32_t>(d));
    w.u32(static_cast<std::uint32_t>(model.num_classes()));
    w.u32(model.classifier_frozen ? 1u : 0u);
    for (const auto& l : model.extractor.layers) {
        for (double v : l.weight.data()) w.f64(v);
        for (double v : l.bias) w.f64(v);
    }
    for (double v : model.classifier.weight.data()) w.f64(v);
    for (double v : model.classifier.bias) w.f64(v);
    return w.take();
}

AdaptationModel decode_model(std::string_view bytes) {
    ByteReader r(bytes);
    r.expect_magic("CFMD");
    const std::uint64_t version_at = r.offset();
    if (const auto v = r.u32(); v != kModelVersion) {
        throw FormatError(version_at, "unsupported model version " + std::to_string(v));
    }
    const std::uint64_t layers_at = r.offset();
    const std::uint32_t n_layers = r.u32();
    if (n_layers == 0 || n_layers > 1024) {
        throw FormatError(layers_at, "implausible layer count " + std::to_string(n_layers));
    }
    std::vector<std::size_t> dims;
    for (std::uint32_t i = 0; i <= n_layers; ++i) {
        const std::uint64_t at = r.offset();
        const std::uint32_t d = r.u32();
        if (d == 0) throw FormatError(at, "zero dimension");
        dims.push_back(d);
    }
    const std::uint64_t classes_at = r.offset();
    const std::uint32_t classes = r.u32();
    if (classes == 0) throw FormatError(classes_at, "zero classes");
    const std::uint64_t flags_at = r.offset();
    const std::uint32_t flags = r.u32();
    if ((flags & ~1u) != 0) throw FormatError(flags_at, "unknown flag bits");

    std::uint64_t n_params = dims.back() * static_cast<std::uint64_t>(classes) + classes;
    for (std::size_t l = 0; l < n_layers; ++l) n_params += dims[l + 1] * (dims[l] + 1);
    r.require(n_params * 8, "parameters");

    AdaptationModel m;
    for (std::size_t l = 0; l < n_layers; ++l) {
        DenseLayer layer = zero_layer(dims[l + 1], dims[l]);
        for (double& v : layer.weight.data()) v = r.f64();
        for (double& v : layer.bias) v = r.f64();
        m.extractor.layers.push_back(std::move(layer));
    }
    m.classifier = {Matrix(classes, dims.back()), Vector(classes, 0.0)};
    for (double& v : m.classifier.weight.data()) v = r.f64();
    for (double& v : m.classifier.bias) v = r.f64();
    m.classifier_frozen = (flags & 1u) != 0;
    r.expect_end();
    try {
        m.validate();
    } catch (const InvalidArgument& e) {
        throw FormatError(0, std::string("invalid parameters: ") + e.what());
    }
    return m;
}

void save_model(const AdaptationModel& model, const std::filesystem::path& path) {
    write_file(path, encode_model(model));
}

AdaptationModel load_model(const std::filesystem::path& path) { return decode_model(read_file(path)); }

}  // namespace colearn
