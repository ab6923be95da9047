#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moevd/features.hpp"

namespace moevd::learn {

using features::SparseRow;

inline constexpr double kProbEpsilon = 1e-12;

enum class ModelKind { linear, mlp1 };
enum class LossKind { binary_ce, focal };

std::string to_string(ModelKind k);
std::string to_string(LossKind k);
ModelKind parse_model_kind(std::string_view s);
LossKind parse_loss_kind(std::string_view s);

struct LossSpec {
    LossKind kind = LossKind::binary_ce;
    double gamma = 1.0;          // focal only
    std::vector<double> alpha;   // focal only, one per class

    static LossSpec binary() { return {}; }
    static LossSpec focal(double gamma, std::vector<double> alpha) { return {LossKind::focal, gamma, std::move(alpha)}; }
};

struct TrainConfig {
    std::size_t batch_size = 32;
    int epochs = 10;
    double learning_rate = 1e-3;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 0;
    LossSpec loss;

    /// Throws ConfigError when a field is out of range.
    void validate() const;
};

/// Linear or one-hidden-layer (ReLU) classifier. out_dim == 1 is a binary
/// model with a logistic link, otherwise a softmax over out_dim classes.
///
/// Weight matrices are stored feature-major: `w1[i * cols + j]` is the weight
/// from input i to unit j, so a sparse input row touches contiguous memory.
struct Model {
    ModelKind kind = ModelKind::linear;
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;  // mlp1 only
    std::size_t out_dim = 1;

    std::vector<double> w1, b1;  // linear: input->out; mlp1: input->hidden
    std::vector<double> w2, b2;  // mlp1 only: hidden->out

    static Model linear(std::size_t input_dim, std::size_t out_dim);
    static Model mlp1(std::size_t input_dim, std::size_t hidden_dim, std::size_t out_dim, std::uint64_t seed);

    bool binary() const noexcept { return out_dim == 1; }
    std::size_t first_layer_width() const noexcept { return kind == ModelKind::linear ? out_dim : hidden_dim; }
    std::size_t parameter_count() const noexcept { return w1.size() + b1.size() + w2.size() + b2.size(); }
    bool all_finite() const;

    /// Rounds every parameter to the nearest float32, the precision model
    /// files store. Trained models are always in this state.
    void round_to_float();
};

/// Binary: {p} with p = logistic(z). Multi-class: softmax probabilities.
/// Throws ShapeError when x.dim != model.input_dim.
std::vector<double> forward(const Model& model, SparseRow x);

/// Raw output scores before the link function.
std::vector<double> logits(const Model& model, SparseRow x);

double binary_ce_loss(double p, int y);

/// -alpha_t (1 - p_t)^gamma ln p_t with p_t clamped to [eps, 1 - eps].
double focal_loss(std::span<const double> probs, std::size_t t, const LossSpec& spec);

struct Example {
    SparseRow x;
    int target = 0;  // 0/1 for binary, class index for focal
};

/// Same layout as Model's parameters.
struct Gradients {
    std::vector<double> w1, b1, w2, b2;
    static Gradients zeros_like(const Model& m);
};

/// Mean batch loss; fills `grad` with its exact gradient. Throws
/// NumericalError when the loss is not finite.
double gradient(const Model& model, std::span<const Example> batch, const LossSpec& spec, Gradients& grad);

/// Mean loss only.
double batch_loss(const Model& model, std::span<const Example> batch, const LossSpec& spec);

/// Adam with decoupled weight decay.
class AdamW {
public:
    AdamW(const Model& model, const TrainConfig& cfg);
    void step(Model& model, const Gradients& grad);
    std::uint64_t steps() const noexcept { return t_; }

private:
    double lr_, wd_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    Gradients m_, v_;
};

struct TrainResult {
    Model model;
    std::vector<double> epoch_loss;  // mean training loss per epoch
};

/// Mini-batch AdamW over `data`, reshuffled each epoch from `cfg.seed`.
/// Returns float32-rounded weights. Throws TrainingError on divergence.
TrainResult train(Model model, std::span<const Example> data, const TrainConfig& cfg);

struct GradCheckReport {
    bool pass = true;
    double max_rel_error = 0.0;
    std::string worst_coordinate;
    std::size_t checked = 0;
    std::size_t skipped_kinks = 0;  // perturbation straddled a ReLU kink
    std::vector<std::string> failures;
};

struct GradCheckOptions {
    double h = 1e-5;
    double tol = 1e-4;
    double weight_fraction = 0.01;  // of w1/w2 coordinates; every bias is checked
    std::uint64_t seed = 0;
    double denominator_floor = 1e-6;
};

/// Compares `analytic` (or gradient() when null) against central differences.
GradCheckReport finite_diff_check(const Model& model, std::span<const Example> batch, const LossSpec& spec,
                                  const GradCheckOptions& opts = {}, const Gradients* analytic = nullptr);

}  // namespace moevd::learn
