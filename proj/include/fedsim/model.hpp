#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/tensor.hpp"

namespace fedsim {

enum class Fusion { none, feature, probability };

const char* to_string(Fusion f);
Fusion parse_fusion(std::string_view s);

// Small classifier family standing in for an imaging backbone:
//   input -> [tanh hidden] -> [linear-attention block over hidden tokens,
//   residual, mean-pool] -> linear head -> softmax.
// Fusion models run two such encoders, one per modality.
struct ModelSpec {
  std::size_t input_dim = 0;
  std::size_t input_dim2 = 0;  // second modality width; 0 means input_dim
  std::size_t hidden_dim = 0;  // 0 = logistic head directly on inputs
  std::size_t num_classes = 2;
  bool use_attention = false;
  std::size_t token_dim = 4;
  Fusion fusion = Fusion::none;
  double fusion_weight = 0.5;

  // Throws ConfigError on any violated invariant.
  void validate() const;
  std::size_t second_input_dim() const { return input_dim2 ? input_dim2 : input_dim; }
  std::size_t tokens() const { return use_attention ? hidden_dim / token_dim : 0; }
  // Width of the penultimate features of one encoder.
  std::size_t feature_dim(std::size_t in_dim) const;
};

struct LayoutItem {
  std::string name;
  Shape shape;

  friend bool operator==(const LayoutItem&, const LayoutItem&) = default;
};

// Flat parameter vector [1 x P] plus its named layout.
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(std::vector<LayoutItem> layout);
  ModelParams(std::vector<LayoutItem> layout, Tensor flat);

  const std::vector<LayoutItem>& layout() const { return layout_; }
  const Tensor& flat() const { return flat_; }
  Tensor& flat() { return flat_; }
  std::size_t size() const { return flat_.size(); }

  bool same_layout(const ModelParams& other) const { return layout_ == other.layout_; }
  bool has(std::string_view name) const;
  Tensor get(std::string_view name) const;
  void set(std::string_view name, const Tensor& value);

  std::vector<Tensor> unpack() const;
  static ModelParams pack(std::vector<LayoutItem> layout, const std::vector<Tensor>& items);

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  std::size_t offset_of(std::string_view name, const LayoutItem** item) const;

  std::vector<LayoutItem> layout_;
  Tensor flat_;
};

// Squared Euclidean distance between flat vectors; layouts must match.
double squared_distance(const ModelParams& a, const ModelParams& b);

// A JSON header line {"layout": [...]} followed by one FCT1 tensor per item.
void write_params(std::ostream& out, const ModelParams& params);
ModelParams read_params(std::istream& in);

std::vector<LayoutItem> model_layout(const ModelSpec& spec);
ModelParams zero_params(const ModelSpec& spec);
// Weights ~ N(0, 1/fan_in), biases zero.
ModelParams init_params(const ModelSpec& spec, SeededRng& rng);

// [B x num_classes] class probabilities.
Tensor forward(const ModelSpec& spec, const ModelParams& params, const Tensor& x,
               const std::optional<Tensor>& x2 = std::nullopt);

inline constexpr double kLogClamp = 1e-12;

double loss_ce(const Tensor& probs, std::span<const int> labels);
// base + (mu / 2) * ||params - global_w||^2
double loss_prox(double base, const ModelParams& params, const ModelParams& global_w, double mu);

// Cross-entropy of forward() plus the proximal term when global_w is given.
double objective(const ModelSpec& spec, const ModelParams& params, const Batch& batch,
                 const ModelParams* global_w = nullptr, double mu = 0.0);

// Gradient of objective() with respect to the flat parameters.
ModelParams grad(const ModelSpec& spec, const ModelParams& params, const Batch& batch,
                 const ModelParams* global_w = nullptr, double mu = 0.0);

}  // namespace fedsim
