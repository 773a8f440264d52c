#include "tabsynth/neuralnet.hpp"

#include <cmath>
#include <sstream>

namespace tabsynth {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::tanh: return "tanh";
    case Activation::gumbel_softmax: return "gumbel_softmax";
  }
  return "linear";
}

Activation parse_activation(const std::string& name) {
  if (name == "linear") return Activation::linear;
  if (name == "relu") return Activation::relu;
  if (name == "leaky_relu") return Activation::leaky_relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "gumbel_softmax") return Activation::gumbel_softmax;
  throw Error("unknown activation '" + name + "'");
}

// --- GradientTape -----------------------------------------------------------

GradientTape GradientTape::zeros_like(const DenseNet& net) {
  GradientTape t;
  for (const auto& l : net.layers()) {
    t.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    t.bias.push_back(RowVector::Zero(l.bias.size()));
    t.bn_scale.push_back(RowVector::Zero(l.bn_scale.size()));
    t.bn_shift.push_back(RowVector::Zero(l.bn_shift.size()));
  }
  return t;
}

GradientTape& GradientTape::add(const GradientTape& other, double scale) {
  if (other.weight.size() != weight.size()) throw Error("gradient tape: layer count mismatch");
  for (std::size_t i = 0; i < weight.size(); ++i) {
    if (other.weight[i].rows() != weight[i].rows() || other.weight[i].cols() != weight[i].cols() ||
        other.bias[i].size() != bias[i].size() || other.bn_scale[i].size() != bn_scale[i].size() ||
        other.bn_shift[i].size() != bn_shift[i].size()) {
      throw Error("gradient tape: shape mismatch at layer " + std::to_string(i));
    }
    weight[i] += scale * other.weight[i];
    bias[i] += scale * other.bias[i];
    bn_scale[i] += scale * other.bn_scale[i];
    bn_shift[i] += scale * other.bn_shift[i];
  }
  return *this;
}

bool GradientTape::is_zero() const {
  for (std::size_t i = 0; i < weight.size(); ++i) {
    if (!weight[i].isZero(0.0) || !bias[i].isZero(0.0)) return false;
    if (!bn_scale[i].isZero(0.0) || !bn_shift[i].isZero(0.0)) return false;
  }
  return true;
}

std::vector<double> GradientTape::flatten() const {
  std::vector<double> out;
  for (std::size_t i = 0; i < weight.size(); ++i) {
    out.insert(out.end(), weight[i].data(), weight[i].data() + weight[i].size());
    out.insert(out.end(), bias[i].data(), bias[i].data() + bias[i].size());
    out.insert(out.end(), bn_scale[i].data(), bn_scale[i].data() + bn_scale[i].size());
    out.insert(out.end(), bn_shift[i].data(), bn_shift[i].data() + bn_shift[i].size());
  }
  return out;
}

// --- activations ------------------------------------------------------------

void tempered_softmax_rows(Eigen::Ref<Matrix> x, const Matrix* noise, double tau) {
  if (noise != nullptr) x += *noise;
  x /= tau;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

Matrix tempered_softmax_backward(const Matrix& y, const Matrix& grad_y, double tau) {
  Matrix dot = (y.array() * grad_y.array()).rowwise().sum();
  Matrix g = y.array() * (grad_y.array() - dot.replicate(1, y.cols()).array());
  return g / tau;
}

std::vector<double> gumbel_softmax_sample(std::span<const double> logits, double tau, Rng& rng) {
  if (!(tau > 0.0)) throw Error("gumbel_softmax: tau must be positive");
  if (logits.empty()) throw Error("gumbel_softmax: empty logits");
  Matrix x(1, static_cast<Eigen::Index>(logits.size()));
  Matrix g(1, x.cols());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) throw Error("gumbel_softmax: non-finite logit");
    x(0, static_cast<Eigen::Index>(i)) = logits[i];
    g(0, static_cast<Eigen::Index>(i)) = rng.gumbel();
  }
  tempered_softmax_rows(x, &g, tau);
  return {x.data(), x.data() + x.size()};
}

namespace {

void activate(Activation a, Matrix& z, const Matrix* noise, double tau) {
  switch (a) {
    case Activation::linear: break;
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::leaky_relu: z = z.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; }); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
    case Activation::gumbel_softmax: tempered_softmax_rows(z, noise, tau); break;
  }
}

// dL/dz from dL/da for a = act(z).
Matrix activation_backward(Activation a, const Matrix& pre, const Matrix& post, const Matrix& grad, double tau) {
  switch (a) {
    case Activation::linear: return grad;
    case Activation::relu: return (pre.array() > 0.0).select(grad, 0.0);
    case Activation::leaky_relu: return (pre.array() > 0.0).select(grad, kLeakySlope * grad);
    case Activation::tanh: return grad.array() * (1.0 - post.array().square());
    case Activation::gumbel_softmax: return tempered_softmax_backward(post, grad, tau);
  }
  return grad;
}

// Elementwise derivative of a piecewise-linear activation.
Matrix slope_mask(Activation a, const Matrix& pre) {
  switch (a) {
    case Activation::linear: return Matrix::Ones(pre.rows(), pre.cols());
    case Activation::relu: return (pre.array() > 0.0).cast<double>().matrix();
    case Activation::leaky_relu: return (pre.array() > 0.0).select(Matrix::Ones(pre.rows(), pre.cols()), kLeakySlope);
    default: throw Error("gradient_penalty: activation '" + to_string(a) + "' is not piecewise linear");
  }
}

}  // namespace

// --- DenseNet ---------------------------------------------------------------

DenseNet::DenseNet(std::size_t input_width, const std::vector<LayerSpec>& specs, std::uint64_t seed)
    : input_width_(input_width) {
  if (input_width == 0) throw Error("densenet: input width must be positive");
  Rng rng(seed);
  std::size_t in = input_width;
  for (const auto& spec : specs) {
    if (spec.width == 0) throw Error("densenet: layer width must be positive");
    if (spec.activation == Activation::gumbel_softmax && !(spec.tau > 0.0)) {
      throw Error("densenet: gumbel_softmax tau must be positive");
    }
    DenseLayer layer;
    const double limit = std::sqrt(6.0 / static_cast<double>(in + spec.width));
    layer.weight.resize(static_cast<Eigen::Index>(spec.width), static_cast<Eigen::Index>(in));
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = rng.uniform(-limit, limit);
    layer.bias = RowVector::Zero(static_cast<Eigen::Index>(spec.width));
    layer.activation = spec.activation;
    layer.residual = spec.residual;
    layer.tau = spec.tau;
    if (spec.batch_norm) {
      const auto w = static_cast<Eigen::Index>(spec.width);
      layer.batch_norm = true;
      layer.bn_scale = RowVector::Ones(w);
      layer.bn_shift = RowVector::Zero(w);
      layer.running_mean = RowVector::Zero(w);
      layer.running_var = RowVector::Ones(w);
    }
    in = layer.out_width();
    layers_.push_back(std::move(layer));
  }
}

DenseNet::DenseNet(std::size_t input_width, std::vector<DenseLayer> layers)
    : input_width_(input_width), layers_(std::move(layers)) {
  std::size_t in = input_width;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.in_width() != in || l.bias.size() != l.weight.rows()) {
      throw Error("densenet: layer " + std::to_string(i) + " dimensions do not compose");
    }
    const Eigen::Index bn = l.batch_norm ? l.weight.rows() : 0;
    if (l.bn_scale.size() != bn || l.bn_shift.size() != bn || l.running_mean.size() != bn ||
        l.running_var.size() != bn) {
      throw Error("densenet: layer " + std::to_string(i) + " normalization parameters have the wrong size");
    }
    in = l.out_width();
  }
}

std::size_t DenseNet::output_width() const { return layers_.empty() ? input_width_ : layers_.back().out_width(); }

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) {
    n += static_cast<std::size_t>(l.weight.size() + l.bias.size() + l.bn_scale.size() + l.bn_shift.size());
  }
  return n;
}

ForwardPass DenseNet::forward(const Matrix& batch, Rng* noise, NormMode mode) const {
  if (static_cast<std::size_t>(batch.cols()) != input_width_) {
    throw Error("densenet: batch width " + std::to_string(batch.cols()) + " does not match input width " +
                std::to_string(input_width_));
  }
  ForwardPass pass;
  pass.net = this;
  pass.mode = mode;
  Matrix x = batch;
  for (const auto& layer : layers_) {
    Matrix z = x * layer.weight.transpose();
    z.rowwise() += layer.bias;
    Matrix zhat;
    RowVector inv_std, mean, var;
    if (layer.batch_norm) {
      if (mode == NormMode::batch) {
        const double m = static_cast<double>(z.rows());
        mean = z.colwise().sum() / m;
        var = (z.rowwise() - mean).array().square().colwise().sum() / m;
      } else {
        mean = layer.running_mean;
        var = layer.running_var;
      }
      inv_std = (var.array() + kNormEpsilon).rsqrt().matrix();
      zhat = (z.rowwise() - mean).array().rowwise() * inv_std.array();
      z = (zhat.array().rowwise() * layer.bn_scale.array()).matrix();
      z.rowwise() += layer.bn_shift;
    }
    Matrix g;
    if (layer.activation == Activation::gumbel_softmax && noise != nullptr) {
      g.resize(z.rows(), z.cols());
      for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = noise->gumbel();
    }
    Matrix a = z;
    activate(layer.activation, a, g.size() > 0 ? &g : nullptr, layer.tau);
    Matrix out;
    if (layer.residual) {
      out.resize(x.rows(), a.cols() + x.cols());
      out << a, x;
    } else {
      out = a;
    }
    pass.inputs.push_back(std::move(x));
    pass.pre.push_back(std::move(z));
    pass.post.push_back(std::move(a));
    pass.noise.push_back(std::move(g));
    pass.normalized.push_back(std::move(zhat));
    pass.inv_std.push_back(std::move(inv_std));
    pass.batch_mean.push_back(std::move(mean));
    pass.batch_var.push_back(std::move(var));
    x = std::move(out);
  }
  pass.output = std::move(x);
  return pass;
}

Backprop DenseNet::backward(const ForwardPass& pass, const Matrix& loss_grad) const {
  if (pass.net != this || pass.inputs.size() != layers_.size()) {
    throw Error("densenet: backward called without a cached forward pass for this network");
  }
  if (loss_grad.rows() != pass.output.rows() || loss_grad.cols() != pass.output.cols()) {
    throw Error("densenet: loss gradient shape does not match forward output");
  }
  Backprop bp;
  bp.tape = GradientTape::zeros_like(*this);
  Matrix grad = loss_grad;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& layer = layers_[li];
    const Eigen::Index width = layer.weight.rows();
    Matrix grad_post = grad.leftCols(width);
    Matrix gz = activation_backward(layer.activation, pass.pre[li], pass.post[li], grad_post, layer.tau);
    if (layer.batch_norm) {
      const Matrix& zhat = pass.normalized[li];
      bp.tape.bn_scale[li] = (gz.array() * zhat.array()).colwise().sum();
      bp.tape.bn_shift[li] = gz.colwise().sum();
      const Matrix gh = gz.array().rowwise() * layer.bn_scale.array();
      if (pass.mode == NormMode::batch) {
        const double m = static_cast<double>(gh.rows());
        const RowVector sum_gh = gh.colwise().sum();
        const RowVector sum_ghz = (gh.array() * zhat.array()).colwise().sum();
        Matrix centred = (gh * m).rowwise() - sum_gh;
        centred -= (zhat.array().rowwise() * sum_ghz.array()).matrix();
        gz = (centred.array().rowwise() * (pass.inv_std[li].array() / m)).matrix();
      } else {
        gz = (gh.array().rowwise() * pass.inv_std[li].array()).matrix();
      }
    }
    bp.tape.weight[li] = gz.transpose() * pass.inputs[li];
    bp.tape.bias[li] = gz.colwise().sum();
    Matrix grad_in = gz * layer.weight;
    if (layer.residual) grad_in += grad.rightCols(grad.cols() - width);
    grad = std::move(grad_in);
  }
  bp.input_grad = std::move(grad);
  return bp;
}

void DenseNet::apply_update(const GradientTape& delta, double scale) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].weight += scale * delta.weight[i];
    layers_[i].bias += scale * delta.bias[i];
    layers_[i].bn_scale += scale * delta.bn_scale[i];
    layers_[i].bn_shift += scale * delta.bn_shift[i];
  }
}

void DenseNet::update_running_stats(const ForwardPass& pass, double momentum) {
  if (pass.net != this || pass.mode != NormMode::batch) {
    throw Error("densenet: running statistics need a batch-mode pass of this network");
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& l = layers_[i];
    if (!l.batch_norm) continue;
    const double m = static_cast<double>(pass.inputs[i].rows());
    const double unbias = m > 1.0 ? m / (m - 1.0) : 1.0;
    l.running_mean = (1.0 - momentum) * l.running_mean + momentum * pass.batch_mean[i];
    l.running_var = (1.0 - momentum) * l.running_var + (momentum * unbias) * pass.batch_var[i];
  }
}

std::string DenseNet::serialize() const {
  std::ostringstream out;
  out << "tabsynth-densenet 1\n";
  out << "input " << input_width_ << "\n";
  out << "layers " << layers_.size() << "\n";
  for (const auto& l : layers_) {
    out << "layer " << l.weight.rows() << ' ' << l.weight.cols() << ' ' << to_string(l.activation) << ' '
        << format_double(l.tau) << ' ' << (l.residual ? 1 : 0) << ' ' << (l.batch_norm ? 1 : 0) << "\n";
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
        if (c) out << ' ';
        out << format_double(l.weight(r, c));
      }
      out << "\n";
    }
    auto row = [&](const RowVector& v) {
      for (Eigen::Index c = 0; c < v.size(); ++c) {
        if (c) out << ' ';
        out << format_double(v(c));
      }
      out << "\n";
    };
    row(l.bias);
    if (l.batch_norm) {
      row(l.bn_scale);
      row(l.bn_shift);
      row(l.running_mean);
      row(l.running_var);
    }
  }
  return out.str();
}

DenseNet DenseNet::deserialize(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto read_line = [&]() {
    if (!std::getline(in, line)) throw Error("densenet: truncated checkpoint");
    return std::string(trim(line));
  };
  auto read_values = [&](Eigen::Index expected) {
    auto parts = split(read_line(), ' ');
    if (static_cast<Eigen::Index>(parts.size()) != expected) throw Error("densenet: malformed parameter row");
    std::vector<double> v(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (!parse_double(parts[i], v[i])) throw Error("densenet: malformed number '" + parts[i] + "'");
    }
    return v;
  };
  if (read_line() != "tabsynth-densenet 1") throw Error("densenet: unsupported checkpoint header");
  auto header = split(read_line(), ' ');
  if (header.size() != 2 || header[0] != "input") throw Error("densenet: expected input width");
  const std::size_t input = std::stoul(header[1]);
  header = split(read_line(), ' ');
  if (header.size() != 2 || header[0] != "layers") throw Error("densenet: expected layer count");
  const std::size_t count = std::stoul(header[1]);
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i < count; ++i) {
    auto parts = split(read_line(), ' ');
    if (parts.size() != 7 || parts[0] != "layer") throw Error("densenet: malformed layer header");
    DenseLayer l;
    const auto rows = static_cast<Eigen::Index>(std::stol(parts[1]));
    const auto cols = static_cast<Eigen::Index>(std::stol(parts[2]));
    l.activation = parse_activation(parts[3]);
    if (!parse_double(parts[4], l.tau)) throw Error("densenet: malformed tau");
    l.residual = parts[5] == "1";
    l.weight.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      auto v = read_values(cols);
      for (Eigen::Index c = 0; c < cols; ++c) l.weight(r, c) = v[static_cast<std::size_t>(c)];
    }
    auto read_row = [&]() {
      auto v = read_values(rows);
      return RowVector(Eigen::Map<RowVector>(v.data(), rows));
    };
    l.bias = read_row();
    l.batch_norm = parts[6] == "1";
    if (l.batch_norm) {
      l.bn_scale = read_row();
      l.bn_shift = read_row();
      l.running_mean = read_row();
      l.running_var = read_row();
    }
    layers.push_back(std::move(l));
  }
  return DenseNet(input, std::move(layers));
}

// --- Adam ---------------------------------------------------------------------

Adam::Adam(const DenseNet& net, AdamOptions options) {
  if (!(options.learning_rate >= 0.0)) throw Error("adam: learning rate must be non-negative");
  if (!(options.beta1 >= 0.0 && options.beta1 < 1.0 && options.beta2 >= 0.0 && options.beta2 < 1.0)) {
    throw Error("adam: betas must lie in [0, 1)");
  }
  state_.options = options;
  for (const auto& l : net.layers()) {
    state_.m_weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    state_.v_weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    state_.m_bias.push_back(RowVector::Zero(l.bias.size()));
    state_.v_bias.push_back(RowVector::Zero(l.bias.size()));
    state_.m_scale.push_back(RowVector::Zero(l.bn_scale.size()));
    state_.v_scale.push_back(RowVector::Zero(l.bn_scale.size()));
    state_.m_shift.push_back(RowVector::Zero(l.bn_shift.size()));
    state_.v_shift.push_back(RowVector::Zero(l.bn_shift.size()));
  }
}

void Adam::step(DenseNet& net, const GradientTape& grad) {
  auto& layers = net.mutable_layers();
  if (layers.size() != state_.m_weight.size() || grad.weight.size() != layers.size()) {
    throw Error("adam: parameter/gradient layer count mismatch");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (grad.weight[i].rows() != layers[i].weight.rows() || grad.weight[i].cols() != layers[i].weight.cols() ||
        grad.bias[i].size() != layers[i].bias.size() || state_.m_weight[i].rows() != layers[i].weight.rows() ||
        state_.m_weight[i].cols() != layers[i].weight.cols() || grad.bn_scale[i].size() != layers[i].bn_scale.size() ||
        grad.bn_shift[i].size() != layers[i].bn_shift.size() || state_.m_scale[i].size() != layers[i].bn_scale.size()) {
      throw Error("adam: shape mismatch at layer " + std::to_string(i));
    }
  }
  const auto& o = state_.options;
  ++state_.step_count;
  const double t = static_cast<double>(state_.step_count);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = o.beta2 * v + (1.0 - o.beta2) * g.cwiseProduct(g);
    param.array() -= o.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + o.epsilon);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i].weight, state_.m_weight[i], state_.v_weight[i], grad.weight[i]);
    update(layers[i].bias, state_.m_bias[i], state_.v_bias[i], grad.bias[i]);
    if (layers[i].batch_norm) {
      update(layers[i].bn_scale, state_.m_scale[i], state_.v_scale[i], grad.bn_scale[i]);
      update(layers[i].bn_shift, state_.m_shift[i], state_.v_shift[i], grad.bn_shift[i]);
    }
  }
}

// --- gradient penalty -----------------------------------------------------------

PenaltyResult gradient_penalty(const DenseNet& net, const Matrix& points) {
  if (net.output_width() != 1) throw Error("gradient_penalty: network must have a scalar output");
  for (const auto& l : net.layers()) {
    if (l.residual || l.batch_norm) {
      throw Error("gradient_penalty: residual and batch-normalized layers are not supported");
    }
  }
  const auto& layers = net.layers();
  const std::size_t depth = layers.size();
  const double m = static_cast<double>(points.rows());
  ForwardPass pass = net.forward(points);

  std::vector<Matrix> masks(depth);
  for (std::size_t l = 0; l < depth; ++l) masks[l] = slope_mask(layers[l].activation, pass.pre[l]);

  // delta[l] = d out / d pre[l], per row.
  std::vector<Matrix> delta(depth);
  delta[depth - 1] = masks[depth - 1];
  for (std::size_t l = depth - 1; l-- > 0;) delta[l] = masks[l].cwiseProduct(delta[l + 1] * layers[l + 1].weight);
  Matrix grad_x = delta[0] * layers[0].weight;

  PenaltyResult result;
  result.tape = GradientTape::zeros_like(net);
  Eigen::VectorXd norms = grad_x.rowwise().norm();
  Matrix u(grad_x.rows(), grad_x.cols());
  for (Eigen::Index r = 0; r < grad_x.rows(); ++r) {
    const double n = norms(r);
    result.value += (n - 1.0) * (n - 1.0) / m;
    if (n > 0.0) u.row(r) = (2.0 / m) * (n - 1.0) / n * grad_x.row(r);
    else u.row(r).setZero();
  }
  // Push u forward through the same linearization: v[0] = u,
  // v[l+1] = mask[l] * (v[l] W_l^T); dP/dW_l = delta[l]^T v[l].
  Matrix v = u;
  for (std::size_t l = 0; l < depth; ++l) {
    result.tape.weight[l] = delta[l].transpose() * v;
    if (l + 1 < depth) v = masks[l].cwiseProduct(v * layers[l].weight.transpose());
  }
  return result;
}

// --- finite differences -----------------------------------------------------

GradientTape numerical_gradient(const DenseNet& net, const std::function<double(const DenseNet&)>& loss, double h) {
  DenseNet probe = net;
  GradientTape g = GradientTape::zeros_like(net);
  auto& layers = probe.mutable_layers();
  auto central = [&](double& param) {
    const double saved = param;
    param = saved + h;
    const double up = loss(probe);
    param = saved - h;
    const double down = loss(probe);
    param = saved;
    return (up - down) / (2.0 * h);
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (Eigen::Index i = 0; i < layers[l].weight.size(); ++i) g.weight[l].data()[i] = central(layers[l].weight.data()[i]);
    for (Eigen::Index i = 0; i < layers[l].bias.size(); ++i) g.bias[l].data()[i] = central(layers[l].bias.data()[i]);
    for (Eigen::Index i = 0; i < layers[l].bn_scale.size(); ++i) {
      g.bn_scale[l].data()[i] = central(layers[l].bn_scale.data()[i]);
    }
    for (Eigen::Index i = 0; i < layers[l].bn_shift.size(); ++i) {
      g.bn_shift[l].data()[i] = central(layers[l].bn_shift.data()[i]);
    }
  }
  return g;
}

double relative_error(const GradientTape& a, const GradientTape& b) {
  auto fa = a.flatten();
  auto fb = b.flatten();
  if (fa.size() != fb.size()) throw Error("relative_error: tape size mismatch");
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    diff += (fa[i] - fb[i]) * (fa[i] - fb[i]);
    na += fa[i] * fa[i];
    nb += fb[i] * fb[i];
  }
  const double denom = std::sqrt(na) + std::sqrt(nb);
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

}  // namespace tabsynth
