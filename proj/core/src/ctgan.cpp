#include "tabsynth/ctgan.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace tabsynth {

int ConditionalLayout::class_id(const std::string& name) const {
  auto it = std::find(classes.begin(), classes.end(), name);
  if (it == classes.end()) throw Error("ctgan: unknown class '" + name + "'");
  return static_cast<int>(it - classes.begin());
}

double discriminator_loss(std::span<const double> d_real, std::span<const double> d_fake) {
  if (d_real.size() != d_fake.size()) throw Error("discriminator_loss: length mismatch");
  if (d_real.empty()) throw Error("discriminator_loss: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < d_real.size(); ++i) sum += d_fake[i] - d_real[i];
  return sum / static_cast<double>(d_real.size());
}

double generator_loss(std::span<const double> d_fake, double ce) {
  if (d_fake.empty()) throw Error("generator_loss: empty input");
  if (!(ce >= 0.0)) throw Error("generator_loss: cross-entropy must be non-negative");
  double sum = 0.0;
  for (double d : d_fake) sum += d;
  return -sum / static_cast<double>(d_fake.size()) + ce;
}

double condition_cross_entropy(const Matrix& probabilities, std::span<const int> targets) {
  if (static_cast<std::size_t>(probabilities.rows()) != targets.size() || targets.empty()) {
    throw Error("condition_cross_entropy: row/target count mismatch");
  }
  double sum = 0.0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    const double p = probabilities(static_cast<Eigen::Index>(r), targets[r]);
    sum -= std::log(std::max(p, 1e-300));
  }
  return sum / static_cast<double>(targets.size());
}

Condition sample_condition(const ConditionalLayout& layout, Rng& rng) {
  if (layout.class_count() == 0) throw Error("sample_condition: layout has no classes");
  Condition c;
  c.class_id = static_cast<int>(rng.index(layout.class_count()));
  c.one_hot = RowVector::Zero(static_cast<Eigen::Index>(layout.condvec_width()));
  c.one_hot(c.class_id) = 1.0;
  return c;
}

Matrix activate_generator_output(const VgmmCodec& codec, std::size_t condvec_width, const Matrix& raw, double tau,
                                 Rng& rng) {
  Matrix out = raw;
  auto softmax_block = [&](std::size_t offset, std::size_t width) {
    Matrix noise(out.rows(), static_cast<Eigen::Index>(width));
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.gumbel();
    auto block = out.middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(width));
    tempered_softmax_rows(block, &noise, tau);
  };
  for (const auto& slot : codec.layout()) {
    auto a = out.col(static_cast<Eigen::Index>(slot.alpha_offset));
    a = a.array().tanh().matrix();
    softmax_block(slot.beta_offset, slot.beta_width);
  }
  softmax_block(codec.encoded_width(), condvec_width);
  return out;
}

namespace {

// Backward through activate_generator_output for the data part; the
// condition block's gradient is supplied separately.
Matrix generator_output_backward(const VgmmCodec& codec, const Matrix& activated, const Matrix& grad_data,
                                 double tau) {
  Matrix g = Matrix::Zero(activated.rows(), activated.cols());
  for (const auto& slot : codec.layout()) {
    const auto a = static_cast<Eigen::Index>(slot.alpha_offset);
    g.col(a) = grad_data.col(a).array() * (1.0 - activated.col(a).array().square());
    const auto b = static_cast<Eigen::Index>(slot.beta_offset);
    const auto w = static_cast<Eigen::Index>(slot.beta_width);
    g.middleCols(b, w) = tempered_softmax_backward(activated.middleCols(b, w), grad_data.middleCols(b, w), tau);
  }
  return g;
}

Matrix row_softmax(const Matrix& logits) {
  Matrix p = logits;
  tempered_softmax_rows(p, nullptr, 1.0);
  return p;
}

struct Batch {
  std::vector<int> class_ids;
  Matrix condvec;
};

Batch sample_batch_conditions(const ConditionalLayout& layout, std::size_t m, Rng& rng) {
  Batch b;
  b.condvec = Matrix::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(layout.condvec_width()));
  for (std::size_t i = 0; i < m; ++i) {
    Condition c = sample_condition(layout, rng);
    b.class_ids.push_back(c.class_id);
    b.condvec(static_cast<Eigen::Index>(i), c.class_id) = 1.0;
  }
  return b;
}

Matrix hstack(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

Matrix gaussian_noise(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix z(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
  return z;
}

// Critic packing: each group of `pac` consecutive rows becomes one critic input.
Matrix pack(const Matrix& rows, std::size_t pac) {
  const auto p = static_cast<Eigen::Index>(pac);
  return Eigen::Map<const Matrix>(rows.data(), rows.rows() / p, rows.cols() * p);
}

Matrix unpack(const Matrix& packed, std::size_t pac) {
  const auto p = static_cast<Eigen::Index>(pac);
  return Eigen::Map<const Matrix>(packed.data(), packed.rows() * p, packed.cols() / p);
}

std::vector<double> column(const Matrix& m) { return {m.data(), m.data() + m.rows()}; }

}  // namespace

CtganModel train_ctgan(const TabularDataset& real, const TrainConfig& cfg, const TrainProgress& progress) {
#if defined(__GLIBC__)
  // Batch matrices are a few MB each. Keeping them on the heap instead of
  // fresh mmap pages removes most of the page-fault cost per step.
  static const bool tuned = [] {
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
    return true;
  }();
  (void)tuned;
#endif
  if (cfg.epochs < 1) throw Error("ctgan: epochs must be at least 1");
  if (cfg.batch_size < 2) throw Error("ctgan: batch_size must be at least 2");
  if (real.empty() || real.classes().empty()) throw Error("ctgan: training data has no rows");
  if (real.n_rows() < 2) throw Error("ctgan: training data needs at least 2 rows");
  if (!(cfg.learning_rate > 0.0) || !(cfg.gumbel_tau > 0.0) || cfg.gradient_penalty_weight < 0.0) {
    throw Error("ctgan: invalid learning rate, tau or penalty weight");
  }
  if (cfg.pac < 1) throw Error("ctgan: pac must be at least 1");
  const std::size_t pac = std::min(cfg.pac, std::min(cfg.batch_size, real.n_rows()));
  std::size_t m = std::min(cfg.batch_size, real.n_rows());
  m -= m % pac;

  CtganModel model;
  model.noise_dim = cfg.noise_dim;
  model.gumbel_tau = cfg.gumbel_tau;
  VgmmOptions vopt = cfg.vgmm;
  vopt.max_modes = std::min(vopt.max_modes, real.n_rows());
  model.codec = fit_vgmm(real, vopt, derive_seed(cfg.seed, "vgmm"));
  model.layout.classes = real.classes();
  for (const auto& c : model.layout.classes) {
    model.layout.class_frequencies.push_back(static_cast<double>(real.class_rows(c).size()) /
                                             static_cast<double>(real.n_rows()));
  }
  const std::size_t ew = model.codec.encoded_width();
  const std::size_t cw = model.layout.condvec_width();

  std::vector<LayerSpec> gspec;
  for (auto w : cfg.generator_widths) {
    LayerSpec block{w, Activation::relu, true, 1.0};
    block.batch_norm = cfg.generator_batch_norm;
    gspec.push_back(block);
  }
  gspec.push_back({ew + cw, Activation::linear, false, 1.0});
  model.generator = DenseNet(cfg.noise_dim + cw, gspec, derive_seed(cfg.seed, "generator-init"));

  std::vector<LayerSpec> dspec;
  for (auto w : cfg.discriminator_widths) dspec.push_back({w, Activation::leaky_relu, false, 1.0});
  dspec.push_back({1, Activation::linear, false, 1.0});
  model.pac = pac;
  model.discriminator = DenseNet(pac * (ew + cw), dspec, derive_seed(cfg.seed, "discriminator-init"));

  Rng rng(derive_seed(cfg.seed, "train"));
  const EncodedDataset encoded = model.codec.encode(real, &rng);
  std::vector<std::vector<std::size_t>> rows_by_class;
  for (const auto& c : model.layout.classes) rows_by_class.push_back(real.class_rows(c));

  AdamOptions aopt{cfg.learning_rate, cfg.beta1, cfg.beta2, 1e-8};
  Adam opt_g(model.generator, aopt);
  Adam opt_d(model.discriminator, aopt);

  const std::size_t steps = (real.n_rows() + m - 1) / m;
  const double inv_m = 1.0 / static_cast<double>(m);
  const double inv_groups = 1.0 / static_cast<double>(m / pac);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double sum_ld = 0.0, sum_lg = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      // Critic update.
      Batch cond = sample_batch_conditions(model.layout, m, rng);
      Matrix g_in = hstack(gaussian_noise(m, cfg.noise_dim, rng), cond.condvec);
      Matrix fake = activate_generator_output(model.codec, cw, model.generator.forward(g_in).output, cfg.gumbel_tau, rng);
      Matrix real_batch(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(ew));
      for (std::size_t i = 0; i < m; ++i) {
        const auto& pool = rows_by_class[static_cast<std::size_t>(cond.class_ids[i])];
        real_batch.row(static_cast<Eigen::Index>(i)) = encoded.rows.row(static_cast<Eigen::Index>(pool[rng.index(pool.size())]));
      }
      Matrix d_real_in = pack(hstack(real_batch, cond.condvec), pac);
      Matrix d_fake_in = pack(hstack(fake.leftCols(static_cast<Eigen::Index>(ew)), cond.condvec), pac);
      ForwardPass pr = model.discriminator.forward(d_real_in);
      ForwardPass pf = model.discriminator.forward(d_fake_in);
      const double ld = discriminator_loss(column(pr.output), column(pf.output));

      GradientTape d_grad = model.discriminator.backward(pr, Matrix::Constant(pr.output.rows(), 1, -inv_groups)).tape;
      d_grad.add(model.discriminator.backward(pf, Matrix::Constant(pf.output.rows(), 1, inv_groups)).tape);
      if (cfg.gradient_penalty_weight > 0.0) {
        Matrix mixed(d_real_in.rows(), d_real_in.cols());
        for (Eigen::Index i = 0; i < mixed.rows(); ++i) {
          const double eps = rng.uniform();
          mixed.row(i) = eps * d_real_in.row(i) + (1.0 - eps) * d_fake_in.row(i);
        }
        d_grad.add(gradient_penalty(model.discriminator, mixed).tape, cfg.gradient_penalty_weight);
      }
      opt_d.step(model.discriminator, d_grad);

      // Generator update.
      cond = sample_batch_conditions(model.layout, m, rng);
      g_in = hstack(gaussian_noise(m, cfg.noise_dim, rng), cond.condvec);
      ForwardPass pg = model.generator.forward(g_in);
      model.generator.update_running_stats(pg);
      fake = activate_generator_output(model.codec, cw, pg.output, cfg.gumbel_tau, rng);
      d_fake_in = pack(hstack(fake.leftCols(static_cast<Eigen::Index>(ew)), cond.condvec), pac);
      pf = model.discriminator.forward(d_fake_in);
      const Matrix cond_logits = pg.output.rightCols(static_cast<Eigen::Index>(cw));
      const Matrix cond_prob = row_softmax(cond_logits);
      const double ce = condition_cross_entropy(cond_prob, cond.class_ids);
      const double lg = generator_loss(column(pf.output), ce);

      Matrix d_in_grad =
          unpack(model.discriminator.backward(pf, Matrix::Constant(pf.output.rows(), 1, -inv_groups)).input_grad, pac);
      Matrix grad_out = generator_output_backward(model.codec, fake, d_in_grad.leftCols(static_cast<Eigen::Index>(ew)),
                                                  cfg.gumbel_tau);
      Matrix ce_grad = cond_prob - cond.condvec;
      grad_out.rightCols(static_cast<Eigen::Index>(cw)) = ce_grad * inv_m;
      opt_g.step(model.generator, model.generator.backward(pg, grad_out).tape);

      if (!std::isfinite(ld) || !std::isfinite(lg)) {
        throw Error("ctgan: non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(step + 1) +
                    " (L_D=" + format_double(ld) + ", L_G=" + format_double(lg) + ")");
      }
      sum_ld += ld;
      sum_lg += lg;
    }
    LossRecord rec{epoch, sum_ld / static_cast<double>(steps), sum_lg / static_cast<double>(steps)};
    model.training_log.push_back(rec);
    if (progress) progress(rec);
  }
  return model;
}

TabularDataset generate(const CtganModel& model, const std::string& class_name, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw Error("ctgan generate: n must be at least 1");
  const int cls = model.layout.class_id(class_name);
  const std::size_t cw = model.layout.condvec_width();
  Rng rng(seed);
  Matrix condvec = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cw));
  condvec.col(cls).setOnes();
  Matrix g_in = hstack(gaussian_noise(n, model.noise_dim, rng), condvec);
  Matrix out = activate_generator_output(model.codec, cw, model.generator.predict(g_in), model.gumbel_tau, rng);
  Matrix decoded = model.codec.decode_rows(out.leftCols(static_cast<Eigen::Index>(model.encoded_width())));
  return TabularDataset(model.codec.feature_names(), std::move(decoded), std::vector<std::string>(n, class_name));
}

TabularDataset augment_with_ctgan(const CtganModel& model, const TabularDataset& ds,
                                  const std::map<std::string, std::size_t>& targets, std::uint64_t seed) {
  TabularDataset out = ds;
  for (const auto& [name, target] : targets) {
    const std::size_t have = ds.has_class(name) ? ds.class_rows(name).size() : 0;
    if (target <= have) continue;
    out = out.concat(generate(model, name, target - have, derive_seed(seed, "generate:" + name)));
  }
  return out;
}

// --- checkpoint -------------------------------------------------------------

namespace {

void write_section(std::ostringstream& out, const std::string& name, const std::string& body) {
  std::size_t lines = static_cast<std::size_t>(std::count(body.begin(), body.end(), '\n'));
  out << name << ' ' << lines << "\n" << body;
}

std::string read_section(std::istringstream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line) || line.rfind(name + " ", 0) != 0) {
    throw Error("ctgan checkpoint: expected section '" + name + "'");
  }
  const std::size_t lines = std::stoul(line.substr(name.size() + 1));
  std::string body;
  for (std::size_t i = 0; i < lines; ++i) {
    if (!std::getline(in, line)) throw Error("ctgan checkpoint: truncated section '" + name + "'");
    body += line + "\n";
  }
  return body;
}

}  // namespace

std::string CtganModel::serialize() const {
  std::ostringstream out;
  out << "tabsynth-ctgan 1\n";
  out << "noise_dim " << noise_dim << "\n";
  out << "gumbel_tau " << format_double(gumbel_tau) << "\n";
  out << "pac " << pac << "\n";
  std::ostringstream classes;
  for (std::size_t i = 0; i < layout.classes.size(); ++i) {
    classes << format_double(layout.class_frequencies[i]) << ' ' << layout.classes[i] << "\n";
  }
  write_section(out, "classes", classes.str());
  write_section(out, "codec", codec.serialize());
  write_section(out, "generator", generator.serialize());
  write_section(out, "discriminator", discriminator.serialize());
  std::ostringstream log;
  for (const auto& r : training_log) {
    log << r.epoch << ' ' << format_double(r.discriminator_loss) << ' ' << format_double(r.generator_loss) << "\n";
  }
  write_section(out, "log", log.str());
  return out.str();
}

CtganModel CtganModel::deserialize(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (trim(line) != "tabsynth-ctgan 1") throw Error("ctgan checkpoint: unsupported header");
  CtganModel model;
  auto value = [&](const std::string& key) {
    if (!std::getline(in, line) || line.rfind(key + " ", 0) != 0) throw Error("ctgan checkpoint: expected '" + key + "'");
    return std::string(trim(line.substr(key.size() + 1)));
  };
  model.noise_dim = std::stoul(value("noise_dim"));
  if (!parse_double(value("gumbel_tau"), model.gumbel_tau)) throw Error("ctgan checkpoint: bad gumbel_tau");
  model.pac = std::stoul(value("pac"));
  if (model.pac < 1) throw Error("ctgan checkpoint: pac must be at least 1");
  std::istringstream classes(read_section(in, "classes"));
  while (std::getline(classes, line)) {
    auto space = line.find(' ');
    double f = 0;
    if (space == std::string::npos || !parse_double(line.substr(0, space), f)) {
      throw Error("ctgan checkpoint: malformed class line");
    }
    model.layout.class_frequencies.push_back(f);
    model.layout.classes.push_back(line.substr(space + 1));
  }
  model.codec = VgmmCodec::deserialize(read_section(in, "codec"));
  model.generator = DenseNet::deserialize(read_section(in, "generator"));
  model.discriminator = DenseNet::deserialize(read_section(in, "discriminator"));
  std::istringstream log(read_section(in, "log"));
  while (std::getline(log, line)) {
    auto parts = split(trim(line), ' ');
    LossRecord r;
    if (parts.size() != 3 || !parse_double(parts[1], r.discriminator_loss) || !parse_double(parts[2], r.generator_loss)) {
      throw Error("ctgan checkpoint: malformed log line");
    }
    r.epoch = std::stoul(parts[0]);
    model.training_log.push_back(r);
  }
  if (model.generator.input_width() != model.noise_dim + model.layout.condvec_width() ||
      model.generator.output_width() != model.encoded_width() + model.layout.condvec_width()) {
    throw Error("ctgan checkpoint: generator shape does not match codec/layout");
  }
  if (model.discriminator.input_width() != model.pac * (model.encoded_width() + model.layout.condvec_width())) {
    throw Error("ctgan checkpoint: discriminator shape does not match codec/layout");
  }
  return model;
}

}  // namespace tabsynth
