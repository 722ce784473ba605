#include "fedsim/model.hpp"

#include <cmath>
#include <istream>
#include "json.hpp"
#include <ostream>

#include "fedsim/autodiff.hpp"
#include "fedsim/errors.hpp"

namespace fedsim {

using nlohmann::json;

const char* to_string(Fusion f) {
  switch (f) {
    case Fusion::none: return "none";
    case Fusion::feature: return "feature";
    case Fusion::probability: return "probability";
  }
  return "none";
}

Fusion parse_fusion(std::string_view s) {
  if (s == "none") return Fusion::none;
  if (s == "feature") return Fusion::feature;
  if (s == "probability") return Fusion::probability;
  throw ConfigError("unknown fusion mode '" + std::string(s) + "'");
}

void ModelSpec::validate() const {
  if (input_dim == 0) throw ConfigError("model: input_dim must be positive");
  if (num_classes != 2 && num_classes != 3) throw ConfigError("model: num_classes must be 2 or 3");
  if (!(fusion_weight >= 0.0 && fusion_weight <= 1.0)) {
    throw ConfigError("model: fusion_weight must lie in [0, 1]");
  }
  if (use_attention) {
    if (hidden_dim == 0) throw ConfigError("model: attention needs hidden_dim > 0");
    if (token_dim == 0 || hidden_dim % token_dim != 0) {
      throw ConfigError("model: hidden_dim must be a multiple of token_dim");
    }
  }
}

std::size_t ModelSpec::feature_dim(std::size_t in_dim) const {
  if (use_attention) return token_dim;
  if (hidden_dim > 0) return hidden_dim;
  return in_dim;
}

// --- ModelParams -----------------------------------------------------------

ModelParams::ModelParams(std::vector<LayoutItem> layout) : layout_(std::move(layout)) {
  std::size_t p = 0;
  for (const auto& item : layout_) p += shape_size(item.shape);
  flat_ = Tensor({1, p});
}

ModelParams::ModelParams(std::vector<LayoutItem> layout, Tensor flat)
    : layout_(std::move(layout)), flat_(std::move(flat)) {
  std::size_t p = 0;
  for (const auto& item : layout_) p += shape_size(item.shape);
  if (flat_.size() != p) {
    throw ConfigError("parameter vector of length " + std::to_string(flat_.size()) +
                      " does not match layout total " + std::to_string(p));
  }
  flat_ = flat_.reshaped({1, p});
}

std::size_t ModelParams::offset_of(std::string_view name, const LayoutItem** item) const {
  std::size_t off = 0;
  for (const auto& it : layout_) {
    if (it.name == name) {
      if (item) *item = &it;
      return off;
    }
    off += shape_size(it.shape);
  }
  throw ConfigError("no parameter named '" + std::string(name) + "'");
}

bool ModelParams::has(std::string_view name) const {
  for (const auto& it : layout_)
    if (it.name == name) return true;
  return false;
}

Tensor ModelParams::get(std::string_view name) const {
  const LayoutItem* item = nullptr;
  const std::size_t off = offset_of(name, &item);
  const std::size_t n = shape_size(item->shape);
  auto src = flat_.data().subspan(off, n);
  return Tensor(item->shape, std::vector<double>(src.begin(), src.end()));
}

void ModelParams::set(std::string_view name, const Tensor& value) {
  const LayoutItem* item = nullptr;
  const std::size_t off = offset_of(name, &item);
  if (value.shape() != item->shape) {
    throw DimensionError("parameter '" + std::string(name) + "' expects shape " +
                         shape_string(item->shape) + ", got " + shape_string(value.shape()));
  }
  std::copy(value.data().begin(), value.data().end(), flat_.data().begin() + off);
}

std::vector<Tensor> ModelParams::unpack() const {
  std::vector<Tensor> out;
  std::size_t off = 0;
  for (const auto& it : layout_) {
    const std::size_t n = shape_size(it.shape);
    auto src = flat_.data().subspan(off, n);
    out.emplace_back(it.shape, std::vector<double>(src.begin(), src.end()));
    off += n;
  }
  return out;
}

ModelParams ModelParams::pack(std::vector<LayoutItem> layout, const std::vector<Tensor>& items) {
  if (items.size() != layout.size()) throw ConfigError("pack: item count does not match layout");
  ModelParams p(std::move(layout));
  for (std::size_t i = 0; i < items.size(); ++i) p.set(p.layout_[i].name, items[i]);
  return p;
}

double squared_distance(const ModelParams& a, const ModelParams& b) {
  if (!a.same_layout(b)) throw ConfigError("parameter layouts differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.flat()[i] - b.flat()[i];
    s += d * d;
  }
  return s;
}

void write_params(std::ostream& out, const ModelParams& params) {
  json header;
  header["layout"] = json::array();
  for (const auto& it : params.layout()) header["layout"].push_back({{"name", it.name}, {"shape", it.shape}});
  out << header.dump() << '\n';
  for (const auto& t : params.unpack()) write_tensor(out, t);
}

ModelParams read_params(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("parameter file: missing layout header");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(std::string("parameter file: bad layout header: ") + e.what());
  }
  std::vector<LayoutItem> layout;
  for (const auto& it : header.at("layout")) {
    layout.push_back({it.at("name").get<std::string>(), it.at("shape").get<Shape>()});
  }
  std::vector<Tensor> items;
  for (const auto& it : layout) {
    Tensor t = read_tensor(in);
    if (t.shape() != it.shape) throw DataError("parameter file: shape mismatch for " + it.name);
    items.push_back(std::move(t));
  }
  return ModelParams::pack(std::move(layout), items);
}

// --- model family ------------------------------------------------------------

namespace {

std::string join(std::string_view prefix, std::string_view name) {
  return prefix.empty() ? std::string(name) : std::string(prefix) + "." + std::string(name);
}

void encoder_layout(const ModelSpec& spec, std::string_view prefix, std::size_t in_dim,
                    std::vector<LayoutItem>& out) {
  if (spec.hidden_dim > 0) {
    out.push_back({join(prefix, "hidden.W"), {in_dim, spec.hidden_dim}});
    out.push_back({join(prefix, "hidden.b"), {spec.hidden_dim}});
  }
  if (spec.use_attention) {
    const std::size_t d = spec.token_dim;
    for (const char* m : {"Q", "K", "V"}) {
      out.push_back({join(prefix, std::string("attn.W") + m), {d, d}});
      out.push_back({join(prefix, std::string("attn.b") + m), {d}});
    }
  }
}

void head_layout(const ModelSpec& spec, std::string_view prefix, std::size_t features,
                 std::vector<LayoutItem>& out) {
  out.push_back({join(prefix, "head.W"), {features, spec.num_classes}});
  out.push_back({join(prefix, "head.b"), {spec.num_classes}});
}

// Binds every parameter tensor to a tape node, by name.
class Bound {
 public:
  Bound(ad::Tape& tape, const ModelParams& params, bool as_leaves) : params_(params) {
    auto items = params.unpack();
    for (auto& t : items) vars_.push_back(as_leaves ? tape.leaf(std::move(t)) : tape.constant(std::move(t)));
  }

  ad::Var operator()(std::string_view name) const {
    const auto& layout = params_.layout();
    for (std::size_t i = 0; i < layout.size(); ++i)
      if (layout[i].name == name) return vars_[i];
    throw ConfigError("model parameters lack '" + std::string(name) + "'");
  }

  const std::vector<ad::Var>& vars() const { return vars_; }

 private:
  const ModelParams& params_;
  std::vector<ad::Var> vars_;
};

ad::Var encode(ad::Tape& tape, const ModelSpec& spec, const Bound& p, std::string_view prefix,
               ad::Var x, std::size_t batch) {
  ad::Var h = x;
  if (spec.hidden_dim > 0) {
    h = tape.tanh(tape.add_row_bias(tape.matmul(x, p(join(prefix, "hidden.W"))),
                                    p(join(prefix, "hidden.b"))));
  }
  if (!spec.use_attention) return h;

  // Each sample's hidden vector becomes N tokens of width d (row-major).
  const std::size_t n = spec.tokens(), d = spec.token_dim;
  ad::Var tokens = tape.reshape(h, {batch * n, d});
  auto project = [&](const char* m) {
    return tape.add_row_bias(tape.matmul(tokens, p(join(prefix, std::string("attn.W") + m))),
                             p(join(prefix, std::string("attn.b") + m)));
  };
  ad::Var phi = tape.softmax_rows(project("Q"));
  ad::Var rho = tape.softmax_cols_grouped(project("K"), n);
  ad::Var summary = tape.batched_matmul(rho, project("V"), batch, /*transpose_a=*/true);
  ad::Var attended = tape.batched_matmul(phi, summary, batch, /*transpose_a=*/false);
  return tape.group_mean_rows(tape.add(tokens, attended), n);
}

ad::Var head(ad::Tape& tape, const Bound& p, std::string_view prefix, ad::Var features) {
  return tape.softmax_rows(
      tape.add_row_bias(tape.matmul(features, p(join(prefix, "head.W"))), p(join(prefix, "head.b"))));
}

void check_inputs(const ModelSpec& spec, const Tensor& x, const std::optional<Tensor>& x2) {
  spec.validate();
  if (x.rank() != 2 || x.cols() != spec.input_dim) {
    throw DimensionError("model input " + shape_string(x.shape()) + " does not match input_dim " +
                         std::to_string(spec.input_dim));
  }
  if (x.rows() == 0) throw DataError("model input has no rows");
  if (spec.fusion == Fusion::none) {
    if (x2) throw ConfigError("second-modality input given to a non-fusion model");
    return;
  }
  if (!x2) throw ConfigError("fusion model requires a second-modality input");
  if (x2->rank() != 2 || x2->rows() != x.rows() || x2->cols() != spec.second_input_dim()) {
    throw DimensionError("second-modality input " + shape_string(x2->shape()) +
                         " does not match the model");
  }
}

ad::Var build(ad::Tape& tape, const ModelSpec& spec, const Bound& p, const Tensor& x,
              const std::optional<Tensor>& x2) {
  check_inputs(spec, x, x2);
  const std::size_t b = x.rows();
  ad::Var in1 = tape.constant(x);
  switch (spec.fusion) {
    case Fusion::none:
      return head(tape, p, "", encode(tape, spec, p, "", in1, b));
    case Fusion::feature: {
      ad::Var in2 = tape.constant(*x2);
      ad::Var f = tape.concat_cols(encode(tape, spec, p, "branch1", in1, b),
                                   encode(tape, spec, p, "branch2", in2, b));
      return head(tape, p, "", f);
    }
    case Fusion::probability: {
      ad::Var in2 = tape.constant(*x2);
      ad::Var p1 = head(tape, p, "branch1", encode(tape, spec, p, "branch1", in1, b));
      ad::Var p2 = head(tape, p, "branch2", encode(tape, spec, p, "branch2", in2, b));
      return tape.mix(p1, p2, spec.fusion_weight);
    }
  }
  throw ConfigError("unknown fusion mode");
}

}  // namespace

std::vector<LayoutItem> model_layout(const ModelSpec& spec) {
  spec.validate();
  std::vector<LayoutItem> out;
  const std::size_t f1 = spec.feature_dim(spec.input_dim);
  const std::size_t f2 = spec.feature_dim(spec.second_input_dim());
  switch (spec.fusion) {
    case Fusion::none:
      encoder_layout(spec, "", spec.input_dim, out);
      head_layout(spec, "", f1, out);
      break;
    case Fusion::feature:
      encoder_layout(spec, "branch1", spec.input_dim, out);
      encoder_layout(spec, "branch2", spec.second_input_dim(), out);
      head_layout(spec, "", f1 + f2, out);
      break;
    case Fusion::probability:
      encoder_layout(spec, "branch1", spec.input_dim, out);
      head_layout(spec, "branch1", f1, out);
      encoder_layout(spec, "branch2", spec.second_input_dim(), out);
      head_layout(spec, "branch2", f2, out);
      break;
  }
  return out;
}

ModelParams zero_params(const ModelSpec& spec) { return ModelParams(model_layout(spec)); }

ModelParams init_params(const ModelSpec& spec, SeededRng& rng) {
  ModelParams p = zero_params(spec);
  for (const auto& it : p.layout()) {
    if (it.shape.size() != 2) continue;  // biases stay zero
    const double stddev = 1.0 / std::sqrt(static_cast<double>(it.shape[0]));
    p.set(it.name, rand_normal(rng, it.shape, 0.0, stddev));
  }
  return p;
}

Tensor forward(const ModelSpec& spec, const ModelParams& params, const Tensor& x,
               const std::optional<Tensor>& x2) {
  ad::Tape tape;
  Bound bound(tape, params, /*as_leaves=*/false);
  return tape.value(build(tape, spec, bound, x, x2));
}

double loss_ce(const Tensor& probs, std::span<const int> labels) {
  if (probs.rank() != 2 || probs.rows() != labels.size()) {
    throw DimensionError("loss_ce: probabilities " + shape_string(probs.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw DataError("loss_ce: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= probs.cols()) {
      throw DataError("label " + std::to_string(y) + " out of range for " +
                      std::to_string(probs.cols()) + " classes");
    }
    total -= std::log(std::max(probs(i, y), kLogClamp));
  }
  return total / static_cast<double>(labels.size());
}

double loss_prox(double base, const ModelParams& params, const ModelParams& global_w, double mu) {
  if (!(mu >= 0.0)) throw ConfigError("proximal mu must be nonnegative");
  if (!params.same_layout(global_w)) throw ConfigError("loss_prox: parameter layouts differ");
  return base + 0.5 * mu * squared_distance(params, global_w);
}

double objective(const ModelSpec& spec, const ModelParams& params, const Batch& batch,
                 const ModelParams* global_w, double mu) {
  double base = loss_ce(forward(spec, params, batch.x, batch.x2), batch.labels);
  return global_w ? loss_prox(base, params, *global_w, mu) : base;
}

ModelParams grad(const ModelSpec& spec, const ModelParams& params, const Batch& batch,
                 const ModelParams* global_w, double mu) {
  if (global_w && !params.same_layout(*global_w)) {
    throw ConfigError("grad: parameter layouts differ");
  }
  if (!(mu >= 0.0)) throw ConfigError("proximal mu must be nonnegative");
  ad::Tape tape;
  Bound bound(tape, params, /*as_leaves=*/true);
  ad::Var probs = build(tape, spec, bound, batch.x, batch.x2);
  ad::Var loss = tape.nll_mean(probs, batch.labels, kLogClamp);
  tape.backward(loss);

  ModelParams g(params.layout());
  std::size_t off = 0;
  for (ad::Var v : bound.vars()) {
    const Tensor& gv = tape.grad(v);
    std::copy(gv.data().begin(), gv.data().end(), g.flat().data().begin() + off);
    off += gv.size();
  }
  if (global_w && mu > 0.0) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      g.flat()[i] += mu * (params.flat()[i] - global_w->flat()[i]);
    }
  }
  return g;
}

}  // namespace fedsim
