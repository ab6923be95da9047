#include "moevd/learn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "moevd/error.hpp"
#include "moevd/rng.hpp"

namespace moevd::learn {

std::string to_string(ModelKind k) { return k == ModelKind::linear ? "linear" : "mlp1"; }
std::string to_string(LossKind k) { return k == LossKind::binary_ce ? "binary_ce" : "focal"; }

ModelKind parse_model_kind(std::string_view s) {
    if (s == "linear") return ModelKind::linear;
    if (s == "mlp1") return ModelKind::mlp1;
    throw ConfigError("unknown model kind '" + std::string(s) + "'");
}

LossKind parse_loss_kind(std::string_view s) {
    if (s == "binary_ce") return LossKind::binary_ce;
    if (s == "focal") return LossKind::focal;
    throw ConfigError("unknown loss kind '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (loss.kind == LossKind::focal) {
        if (loss.gamma < 0.0) throw ConfigError("focal gamma must be >= 0");
        for (double a : loss.alpha)
            if (!(a > 0.0)) throw ConfigError("focal alpha values must be > 0");
    }
}

Model Model::linear(std::size_t input_dim, std::size_t out_dim) {
    if (input_dim == 0 || out_dim == 0) throw ShapeError("linear model needs positive dimensions");
    Model m;
    m.kind = ModelKind::linear;
    m.input_dim = input_dim;
    m.out_dim = out_dim;
    m.w1.assign(input_dim * out_dim, 0.0);
    m.b1.assign(out_dim, 0.0);
    return m;
}

Model Model::mlp1(std::size_t input_dim, std::size_t hidden_dim, std::size_t out_dim, std::uint64_t seed) {
    if (input_dim == 0 || hidden_dim == 0 || out_dim == 0) throw ShapeError("mlp1 model needs positive dimensions");
    Model m;
    m.kind = ModelKind::mlp1;
    m.input_dim = input_dim;
    m.hidden_dim = hidden_dim;
    m.out_dim = out_dim;
    Rng rng(seed);
    // Encoder rows are unit-norm, so unit-scale first-layer weights give
    // unit-variance pre-activations.
    m.w1.resize(input_dim * hidden_dim);
    for (auto& w : m.w1) w = rng.normal();
    m.b1.assign(hidden_dim, 0.0);
    const double scale = std::sqrt(2.0 / static_cast<double>(hidden_dim));
    m.w2.resize(hidden_dim * out_dim);
    for (auto& w : m.w2) w = scale * rng.normal();
    m.b2.assign(out_dim, 0.0);
    return m;
}

bool Model::all_finite() const {
    auto ok = [](const std::vector<double>& v) { return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }); };
    return ok(w1) && ok(b1) && ok(w2) && ok(b2);
}

void Model::round_to_float() {
    for (auto* v : {&w1, &b1, &w2, &b2})
        for (auto& x : *v) x = static_cast<double>(static_cast<float>(x));
}

Gradients Gradients::zeros_like(const Model& m) {
    Gradients g;
    g.w1.assign(m.w1.size(), 0.0);
    g.b1.assign(m.b1.size(), 0.0);
    g.w2.assign(m.w2.size(), 0.0);
    g.b2.assign(m.b2.size(), 0.0);
    return g;
}

namespace {

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void softmax_inplace(std::vector<double>& z) {
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (auto& v : z) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (auto& v : z) v /= sum;
}

void check_shape(const Model& m, SparseRow x) {
    if (x.dim != m.input_dim)
        throw ShapeError("input dim " + std::to_string(x.dim) + " does not match model input dim " +
                         std::to_string(m.input_dim));
}

// First-layer affine map b1 + x W1.
std::vector<double> first_layer(const Model& m, SparseRow x) {
    const std::size_t cols = m.first_layer_width();
    std::vector<double> z(m.b1.begin(), m.b1.end());
    for (const auto& e : x.entries) {
        const double* row = m.w1.data() + static_cast<std::size_t>(e.index) * cols;
        for (std::size_t j = 0; j < cols; ++j) z[j] += e.weight * row[j];
    }
    return z;
}

struct Activations {
    std::vector<double> pre;     // mlp1 hidden pre-activations
    std::vector<double> hidden;  // mlp1 hidden outputs
    std::vector<double> out;     // logits
};

Activations activate(const Model& m, SparseRow x) {
    check_shape(m, x);
    Activations a;
    if (m.kind == ModelKind::linear) {
        a.out = first_layer(m, x);
        return a;
    }
    a.pre = first_layer(m, x);
    a.hidden.resize(a.pre.size());
    for (std::size_t j = 0; j < a.pre.size(); ++j) a.hidden[j] = a.pre[j] > 0.0 ? a.pre[j] : 0.0;
    a.out.assign(m.b2.begin(), m.b2.end());
    for (std::size_t j = 0; j < m.hidden_dim; ++j) {
        const double h = a.hidden[j];
        if (h == 0.0) continue;
        const double* row = m.w2.data() + j * m.out_dim;
        for (std::size_t o = 0; o < m.out_dim; ++o) a.out[o] += h * row[o];
    }
    return a;
}

std::vector<double> link(const Model& m, std::vector<double> z) {
    if (m.binary()) {
        z[0] = sigmoid(z[0]);
    } else {
        softmax_inplace(z);
    }
    return z;
}

void check_loss(const Model& m, const LossSpec& spec) {
    if (spec.kind == LossKind::binary_ce && !m.binary())
        throw ShapeError("binary_ce loss needs a model with out_dim 1");
    if (spec.kind == LossKind::focal) {
        if (m.binary()) throw ShapeError("focal loss needs a multi-class model");
        if (spec.alpha.size() != m.out_dim)
            throw ShapeError("focal alpha has " + std::to_string(spec.alpha.size()) + " entries, model has " +
                             std::to_string(m.out_dim) + " classes");
    }
}

// Loss of one sample and d(loss)/d(logits).
double loss_and_dlogits(const Model& m, const std::vector<double>& z, int target, const LossSpec& spec,
                        std::vector<double>& dz) {
    dz.assign(z.size(), 0.0);
    if (spec.kind == LossKind::binary_ce) {
        if (target != 0 && target != 1) throw ShapeError("binary target must be 0 or 1");
        const double p = sigmoid(z[0]);
        const double loss = binary_ce_loss(p, target);
        if (p >= kProbEpsilon && p <= 1.0 - kProbEpsilon) dz[0] = p - target;
        return loss;
    }
    if (target < 0 || static_cast<std::size_t>(target) >= m.out_dim) throw ShapeError("class target out of range");
    std::vector<double> probs = z;
    softmax_inplace(probs);
    const auto t = static_cast<std::size_t>(target);
    const double loss = focal_loss(probs, t, spec);
    const double pt = probs[t];
    if (pt < kProbEpsilon || pt > 1.0 - kProbEpsilon) return loss;  // clamped: flat

    const double alpha = spec.alpha[t];
    const double q = 1.0 - pt;
    const double focus_term = spec.gamma == 0.0 ? 0.0 : spec.gamma * std::pow(q, spec.gamma - 1.0) * std::log(pt);
    const double dl_dpt = -alpha * (std::pow(q, spec.gamma) / pt - focus_term);
    for (std::size_t j = 0; j < z.size(); ++j) dz[j] = dl_dpt * pt * ((j == t ? 1.0 : 0.0) - probs[j]);
    return loss;
}

}  // namespace

std::vector<double> logits(const Model& model, SparseRow x) { return activate(model, x).out; }

std::vector<double> forward(const Model& model, SparseRow x) { return link(model, activate(model, x).out); }

double binary_ce_loss(double p, int y) {
    p = std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
    return -(y * std::log(p) + (1 - y) * std::log(1.0 - p));
}

double focal_loss(std::span<const double> probs, std::size_t t, const LossSpec& spec) {
    const double pt = std::clamp(probs[t], kProbEpsilon, 1.0 - kProbEpsilon);
    const double alpha = spec.alpha.empty() ? 1.0 : spec.alpha.at(t);
    return -alpha * std::pow(1.0 - pt, spec.gamma) * std::log(pt);
}

double batch_loss(const Model& model, std::span<const Example> batch, const LossSpec& spec) {
    check_loss(model, spec);
    double total = 0.0;
    std::vector<double> dz;
    for (const auto& ex : batch) total += loss_and_dlogits(model, activate(model, ex.x).out, ex.target, spec, dz);
    return total / static_cast<double>(batch.size());
}

double gradient(const Model& model, std::span<const Example> batch, const LossSpec& spec, Gradients& grad) {
    if (batch.empty()) throw ShapeError("gradient: empty batch");
    check_loss(model, spec);
    if (grad.w1.size() != model.w1.size() || grad.w2.size() != model.w2.size()) {
        grad = Gradients::zeros_like(model);
    } else {
        for (auto* v : {&grad.w1, &grad.b1, &grad.w2, &grad.b2}) std::fill(v->begin(), v->end(), 0.0);
    }

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    std::vector<double> dz, dpre;
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const auto& ex = batch[s];
        const Activations a = activate(model, ex.x);
        const double loss = loss_and_dlogits(model, a.out, ex.target, spec, dz);
        if (!std::isfinite(loss)) {
            std::ostringstream msg;
            msg << "non-finite loss at batch position " << s << " (target " << ex.target << ", logits";
            for (double v : a.out) msg << ' ' << v;
            msg << ')';
            throw NumericalError(msg.str());
        }
        total += loss;
        for (auto& v : dz) v *= inv_n;

        if (model.kind == ModelKind::linear) {
            for (std::size_t o = 0; o < model.out_dim; ++o) grad.b1[o] += dz[o];
            for (const auto& e : ex.x.entries) {
                double* row = grad.w1.data() + static_cast<std::size_t>(e.index) * model.out_dim;
                for (std::size_t o = 0; o < model.out_dim; ++o) row[o] += e.weight * dz[o];
            }
            continue;
        }

        for (std::size_t o = 0; o < model.out_dim; ++o) grad.b2[o] += dz[o];
        dpre.assign(model.hidden_dim, 0.0);
        for (std::size_t j = 0; j < model.hidden_dim; ++j) {
            const double* w_row = model.w2.data() + j * model.out_dim;
            double* g_row = grad.w2.data() + j * model.out_dim;
            double back = 0.0;
            for (std::size_t o = 0; o < model.out_dim; ++o) {
                g_row[o] += a.hidden[j] * dz[o];
                back += w_row[o] * dz[o];
            }
            dpre[j] = a.pre[j] > 0.0 ? back : 0.0;
        }
        for (std::size_t j = 0; j < model.hidden_dim; ++j) grad.b1[j] += dpre[j];
        for (const auto& e : ex.x.entries) {
            double* row = grad.w1.data() + static_cast<std::size_t>(e.index) * model.hidden_dim;
            for (std::size_t j = 0; j < model.hidden_dim; ++j) row[j] += e.weight * dpre[j];
        }
    }
    return total * inv_n;
}

AdamW::AdamW(const Model& model, const TrainConfig& cfg)
    : lr_(cfg.learning_rate),
      wd_(cfg.weight_decay),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.adam_epsilon),
      m_(Gradients::zeros_like(model)),
      v_(Gradients::zeros_like(model)) {}

void AdamW::step(Model& model, const Gradients& grad) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const double decay = 1.0 - lr_ * wd_;
    auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                      std::vector<double>& v) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            p[i] *= decay;
            p[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
        }
    };
    update(model.w1, grad.w1, m_.w1, v_.w1);
    update(model.b1, grad.b1, m_.b1, v_.b1);
    update(model.w2, grad.w2, m_.w2, v_.w2);
    update(model.b2, grad.b2, m_.b2, v_.b2);
}

TrainResult train(Model model, std::span<const Example> data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw TrainingDataError("train: empty dataset");
    check_loss(model, cfg.loss);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(cfg.seed);
    AdamW opt(model, cfg);
    Gradients grad = Gradients::zeros_like(model);
    std::vector<Example> batch;
    batch.reserve(cfg.batch_size);

    TrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(std::span(order));
        double epoch_total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
            double loss;
            try {
                loss = gradient(model, batch, cfg.loss, grad);
            } catch (const NumericalError& e) {
                throw TrainingError("epoch " + std::to_string(epoch + 1) + ": " + e.what());
            }
            epoch_total += loss * static_cast<double>(batch.size());
            opt.step(model, grad);
        }
        const double mean = epoch_total / static_cast<double>(data.size());
        if (!std::isfinite(mean) || !model.all_finite())
            throw TrainingError("epoch " + std::to_string(epoch + 1) + ": training diverged");
        result.epoch_loss.push_back(mean);
    }
    model.round_to_float();
    result.model = std::move(model);
    return result;
}

namespace {

std::vector<bool> relu_pattern(const Model& m, std::span<const Example> batch) {
    std::vector<bool> out;
    if (m.kind != ModelKind::mlp1) return out;
    for (const auto& ex : batch)
        for (double v : first_layer(m, ex.x)) out.push_back(v > 0.0);
    return out;
}

}  // namespace

GradCheckReport finite_diff_check(const Model& model, std::span<const Example> batch, const LossSpec& spec,
                                  const GradCheckOptions& opts, const Gradients* analytic) {
    Gradients computed;
    if (!analytic) {
        gradient(model, batch, spec, computed);
        analytic = &computed;
    }

    struct Tensor {
        const char* name;
        std::vector<double> Model::*param;
        std::vector<double> Gradients::*grad;
        bool bias;
    };
    const Tensor tensors[] = {{"w1", &Model::w1, &Gradients::w1, false},
                              {"b1", &Model::b1, &Gradients::b1, true},
                              {"w2", &Model::w2, &Gradients::w2, false},
                              {"b2", &Model::b2, &Gradients::b2, true}};

    Rng rng(opts.seed);
    Model probe = model;
    const auto base_pattern = relu_pattern(model, batch);
    GradCheckReport report;

    for (const auto& t : tensors) {
        const std::size_t n = (model.*t.param).size();
        if (n == 0) continue;
        std::vector<std::size_t> coords;
        if (t.bias || opts.weight_fraction >= 1.0) {
            coords.resize(n);
            std::iota(coords.begin(), coords.end(), std::size_t{0});
        } else {
            const auto want = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(opts.weight_fraction * n)));
            std::vector<std::size_t> all(n);
            std::iota(all.begin(), all.end(), std::size_t{0});
            for (std::size_t i = 0; i < want; ++i) std::swap(all[i], all[i + rng.below(n - i)]);
            coords.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(want));
            std::sort(coords.begin(), coords.end());
        }

        for (auto c : coords) {
            auto& p = (probe.*t.param)[c];
            const double saved = p;
            p = saved + opts.h;
            const bool kink_plus = relu_pattern(probe, batch) != base_pattern;
            const double up = batch_loss(probe, batch, spec);
            p = saved - opts.h;
            const bool kink_minus = relu_pattern(probe, batch) != base_pattern;
            const double down = batch_loss(probe, batch, spec);
            p = saved;
            if (kink_plus || kink_minus) {
                ++report.skipped_kinks;
                continue;
            }
            const double numeric = (up - down) / (2.0 * opts.h);
            const double a = (*analytic.*t.grad)[c];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opts.denominator_floor});
            ++report.checked;
            const std::string name = std::string(t.name) + "[" + std::to_string(c) + "]";
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_coordinate = name;
            }
            if (!(rel < opts.tol)) {
                report.pass = false;
                std::ostringstream msg;
                msg << name << ": analytic " << a << " numeric " << numeric << " rel " << rel;
                report.failures.push_back(msg.str());
            }
        }
    }
    return report;
}

}  // namespace moevd::learn
