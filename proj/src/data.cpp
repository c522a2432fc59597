#include "colearn/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "colearn/binary_io.hpp"
#include "colearn/errors.hpp"
#include "csv.hpp"

namespace colearn {

namespace {

constexpr std::uint32_t kDatasetVersion = 1;
constexpr std::uint32_t kFlagLabels = 1u;
constexpr std::uint32_t kFlagTarget = 2u;

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

Vector gaussian_vector(std::size_t n, Rng& rng) {
    Vector v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

// Unit class directions; orthonormal (Gram-Schmidt) when they fit.
std::vector<Vector> class_directions(std::size_t classes, std::size_t dim, Rng& rng) {
    std::vector<Vector> dirs;
    while (dirs.size() < classes) {
        Vector v = gaussian_vector(dim, rng);
        if (dirs.size() < dim) {
            for (const auto& u : dirs) {
                const double p = dot(v, u);
                for (std::size_t j = 0; j < dim; ++j) v[j] -= p * u[j];
            }
        }
        const double n = norm(v);
        if (n < 1e-8) continue;
        for (double& x : v) x /= n;
        dirs.push_back(std::move(v));
    }
    return dirs;
}

struct MixtureDraw {
    Matrix inputs;
    Labels labels;
};

// per_class samples of every class, in shuffled order.
MixtureDraw draw_mixture(const std::vector<Vector>& means, std::size_t per_class, double sigma, Rng& rng) {
    const std::size_t dim = means.front().size();
    const std::size_t n = means.size() * per_class;
    Labels grouped(n);
    for (std::size_t i = 0; i < n; ++i) grouped[i] = i / per_class;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);

    MixtureDraw d{Matrix(n, dim), Labels(n)};
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = grouped[order[i]];
        d.labels[i] = c;
        auto row = d.inputs.row(i);
        for (std::size_t j = 0; j < dim; ++j) row[j] = means[c][j] + sigma * rng.normal();
    }
    return d;
}

void apply_shift(const ShiftTransform& shift, Matrix& x) {
    const std::size_t dim = x.cols();
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        for (std::size_t i = 0; i < shift.rotation_angles.size(); ++i) {
            const std::size_t a = 2 * i;
            const std::size_t b = 2 * i + 1;
            const double c = std::cos(shift.rotation_angles[i]);
            const double s = std::sin(shift.rotation_angles[i]);
            const double u = row[a];
            const double v = row[b];
            row[a] = c * u - s * v;
            row[b] = s * u + c * v;
        }
        for (std::size_t j = 0; j < dim; ++j) {
            row[j] = shift.scale * row[j] + (shift.translation.empty() ? 0.0 : shift.translation[j]);
        }
    }
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double scale, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = scale * rng.normal();
    return m;
}

}  // namespace

void SyntheticSpec::validate() const {
    if (classes < 2) throw InvalidArgument("synthetic task needs at least 2 classes");
    if (input_dim < 1) throw InvalidArgument("input_dim must be at least 1");
    if (source_per_class < 1 || target_per_class < 1) throw InvalidArgument("per-class sample counts must be at least 1");
    if (!(separation > 0.0) || !std::isfinite(separation)) throw InvalidArgument("separation must be positive");
    if (!(covariance_scale > 0.0) || !std::isfinite(covariance_scale)) {
        throw InvalidArgument("degenerate covariance: covariance_scale must be positive");
    }
    if (2 * shift.rotation_angles.size() > input_dim) {
        throw InvalidArgument("too many rotation angles for input_dim " + std::to_string(input_dim));
    }
    if (!shift.translation.empty() && shift.translation.size() != input_dim) {
        throw InvalidArgument("translation length must equal input_dim");
    }
    if (!(shift.scale > 0.0) || !std::isfinite(shift.scale)) throw InvalidArgument("shift scale must be positive");
    if (pretrained.feature_dim() == 0) throw InvalidArgument("pre-trained feature dimension must be positive");
    if (pretrained.map_dim > 0 && pretrained.hidden_dim == 0) throw InvalidArgument("pre-trained hidden_dim must be positive");
    if (!(pretrained.noise > 0.0) || !std::isfinite(pretrained.noise)) {
        throw InvalidArgument("degenerate covariance: pre-trained noise must be positive");
    }
    if (!(pretrained.informativeness >= 0.0) || !std::isfinite(pretrained.informativeness)) {
        throw InvalidArgument("informativeness must be nonnegative");
    }
    if (!std::isfinite(pretrained.signal_strength)) throw InvalidArgument("signal_strength must be finite");
}

SyntheticProblem generate(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    std::vector<Vector> means = class_directions(spec.classes, spec.input_dim, rng);
    for (auto& m : means) {
        for (double& v : m) v *= spec.separation;
    }

    // Frozen pre-trained map parameters, fixed before any sample is drawn.
    const auto& pm = spec.pretrained;
    const Matrix map_in = gaussian_matrix(pm.hidden_dim, spec.input_dim, 1.0 / std::sqrt(double(spec.input_dim)), rng);
    const Vector map_bias = gaussian_vector(pm.hidden_dim, rng);
    const Matrix map_out = gaussian_matrix(pm.map_dim, pm.hidden_dim,
                                           pm.hidden_dim ? 1.0 / std::sqrt(double(pm.hidden_dim)) : 0.0, rng);
    const std::vector<Vector> prototypes =
        pm.signal_dim ? class_directions(spec.classes, pm.signal_dim, rng) : std::vector<Vector>{};

    MixtureDraw src = draw_mixture(means, spec.source_per_class, spec.covariance_scale, rng);
    MixtureDraw tgt = draw_mixture(means, spec.target_per_class, spec.covariance_scale, rng);
    apply_shift(spec.shift, tgt.inputs);
    for (double& v : src.inputs.data()) v = to_f32(v);
    for (double& v : tgt.inputs.data()) v = to_f32(v);

    Matrix bank(tgt.inputs.rows(), pm.feature_dim());
    Vector hidden(pm.hidden_dim);
    for (std::size_t r = 0; r < tgt.inputs.rows(); ++r) {
        const auto x = tgt.inputs.row(r);
        auto out = bank.row(r);
        for (std::size_t h = 0; h < pm.hidden_dim; ++h) hidden[h] = std::tanh(map_bias[h] + dot(map_in.row(h), x));
        for (std::size_t k = 0; k < pm.map_dim; ++k) {
            out[k] = pm.informativeness * dot(map_out.row(k), hidden) + pm.noise * rng.normal();
        }
        for (std::size_t k = 0; k < pm.signal_dim; ++k) {
            out[pm.map_dim + k] = pm.informativeness * pm.signal_strength * prototypes[tgt.labels[r]][k] +
                                  pm.noise * rng.normal();
        }
        for (double& v : out) v = to_f32(v);
    }

    SyntheticProblem p{
        Dataset{std::move(src.inputs), std::move(src.labels), Domain::Source},
        Dataset{std::move(tgt.inputs), std::nullopt, Domain::Target},
        FeatureBank(std::move(bank)),
        std::move(tgt.labels),
    };
    return p;
}

void SourceTrainConfig::validate() const {
    if (batch_size < 1) throw InvalidArgument("source batch_size must be at least 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidArgument("source lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("source momentum must lie in [0, 1)");
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
        throw InvalidArgument("label_smoothing must lie in [0, 1)");
    }
}

AdaptationModel train_source(const Dataset& source, std::span<const std::size_t> extractor_dims,
                             std::size_t num_classes, const SourceTrainConfig& config) {
    config.validate();
    if (!source.labels) throw InvalidArgument("source training needs labeled data");
    if (source.size() == 0) throw InvalidArgument("source dataset is empty");
    if (num_classes < 2) throw InvalidArgument("need at least 2 classes");
    for (std::size_t l : *source.labels) {
        if (l >= num_classes) throw InvalidArgument("source label " + std::to_string(l) + " out of range");
    }
    Rng rng(config.seed);
    AdaptationModel model = init_model(extractor_dims, num_classes, rng);
    if (model.input_dim() != source.inputs.cols()) {
        throw InvalidArgument("extractor input dim " + std::to_string(model.input_dim()) +
                              " does not match source inputs " + std::to_string(source.inputs.cols()));
    }
    SgdState opt = SgdState::for_model(model, config.lr, config.momentum);

    const double off = config.label_smoothing / static_cast<double>(num_classes);
    std::vector<Vector> targets(source.size(), Vector(num_classes, off));
    for (std::size_t i = 0; i < source.size(); ++i) targets[i][(*source.labels)[i]] += 1.0 - config.label_smoothing;

    std::vector<std::size_t> order(source.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<SoftSample> batch;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(start + config.batch_size, order.size());
            batch.clear();
            for (std::size_t k = start; k < end; ++k) batch.push_back({source.inputs.row(order[k]), targets[order[k]]});
            LossAndGradients lg = soft_cross_entropy_grad(model, batch, true);
            if (!std::isfinite(lg.loss)) {
                throw NumericalError("source training diverged in epoch " + std::to_string(epoch + 1));
            }
            lg.grads *= 1.0 / static_cast<double>(batch.size());
            sgd_step(model, lg.grads, opt);
        }
    }
    return model;
}

std::string encode_dataset(const Dataset& ds) {
    ByteWriter w;
    w.magic("CFDS");
    w.u32(kDatasetVersion);
    w.u64(ds.inputs.rows());
    w.u32(static_cast<std::uint32_t>(ds.inputs.cols()));
    w.u32((ds.labels ? kFlagLabels : 0u) | (ds.domain == Domain::Target ? kFlagTarget : 0u));
    for (double v : ds.inputs.data()) w.f32(static_cast<float>(v));
    if (ds.labels) {
        for (std::size_t l : *ds.labels) w.i32(static_cast<std::int32_t>(l));
    }
    return w.take();
}

Dataset decode_dataset(std::string_view bytes) {
    ByteReader r(bytes);
    r.expect_magic("CFDS");
    const std::uint64_t version_at = r.offset();
    if (const auto v = r.u32(); v != kDatasetVersion) {
        throw FormatError(version_at, "unsupported dataset version " + std::to_string(v));
    }
    const std::uint64_t n = r.u64();
    const std::uint64_t dim_at = r.offset();
    const std::uint32_t d = r.u32();
    if (d == 0) throw FormatError(dim_at, "zero input dimension");
    const std::uint64_t flags_at = r.offset();
    const std::uint32_t flags = r.u32();
    if ((flags & ~(kFlagLabels | kFlagTarget)) != 0) throw FormatError(flags_at, "unknown flag bits");
    const bool has_labels = (flags & kFlagLabels) != 0;
    if (n > std::numeric_limits<std::uint64_t>::max() / 4 / d) throw FormatError(dim_at, "size overflow");
    r.require(n * d * 4 + (has_labels ? n * 4 : 0), "dataset payload");

    Dataset ds;
    ds.domain = (flags & kFlagTarget) ? Domain::Target : Domain::Source;
    ds.inputs = Matrix(n, d);
    for (double& v : ds.inputs.data()) {
        const std::uint64_t at = r.offset();
        v = static_cast<double>(r.f32());
        if (!std::isfinite(v)) throw FormatError(at, "non-finite input value");
    }
    if (has_labels) {
        ds.labels.emplace(n);
        for (auto& l : *ds.labels) {
            const std::uint64_t at = r.offset();
            const std::int32_t v = r.i32();
            if (v < 0) throw FormatError(at, "negative label " + std::to_string(v));
            l = static_cast<std::size_t>(v);
        }
    }
    r.expect_end();
    return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) { write_file(path, encode_dataset(ds)); }

Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

void save_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
    std::string out;
    for (std::size_t j = 0; j < ds.inputs.cols(); ++j) out += (j ? ",x" : "x") + std::to_string(j);
    if (ds.labels) out += ",label";
    out += '\n';
    for (std::size_t r = 0; r < ds.size(); ++r) {
        const auto row = ds.inputs.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) out += ',';
            out += csv::format_value(row[j]);
        }
        if (ds.labels) out += "," + std::to_string((*ds.labels)[r]);
        out += '\n';
    }
    write_file(path, out);
}

Dataset load_dataset_csv(const std::filesystem::path& path, Domain domain) {
    const csv::Table t = csv::parse(read_file(path));
    const bool has_labels = !t.header.empty() && t.header.back() == "label";
    const std::size_t dim = t.header.size() - (has_labels ? 1 : 0);
    if (dim == 0) throw FormatError(1, "no input columns");
    Dataset ds;
    ds.domain = domain;
    ds.inputs = Matrix(t.rows.size(), dim);
    if (has_labels) ds.labels.emplace(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        std::copy_n(t.rows[r].begin(), dim, ds.inputs.row(r).begin());
        if (has_labels) {
            const double v = t.rows[r].back();
            if (v < 0 || v != std::floor(v)) throw FormatError(r + 2, "label is not a nonnegative integer");
            (*ds.labels)[r] = static_cast<std::size_t>(v);
        }
    }
    return ds;
}

void save_labels_csv(std::span<const std::size_t> labels, const std::filesystem::path& path) {
    std::string out = "sample_id,label\n";
    for (std::size_t i = 0; i < labels.size(); ++i) out += std::to_string(i) + "," + std::to_string(labels[i]) + "\n";
    write_file(path, out);
}

Labels load_labels_csv(const std::filesystem::path& path) {
    const csv::Table t = csv::parse(read_file(path));
    if (t.header.size() != 2 || t.header[1] != "label") throw FormatError(1, "expected header sample_id,label");
    Labels out(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const double id = t.rows[r][0];
        const double v = t.rows[r][1];
        if (id != static_cast<double>(r)) throw FormatError(r + 2, "sample ids must be 0..N-1 in order");
        if (v < 0 || v != std::floor(v)) throw FormatError(r + 2, "label is not a nonnegative integer");
        out[r] = static_cast<std::size_t>(v);
    }
    return out;
}

}  // namespace colearn
