#include "gait/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace gait {

void validate(const TrainConfig& cfg) {
  if (cfg.steps < 1) throw ConfigError("steps must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (cfg.checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  validate(cfg.weights);
  if (!(cfg.adam.lr > 0.0) || !std::isfinite(cfg.adam.lr)) {
    throw ConfigError("learning rate must be positive");
  }
  if (cfg.adam.beta1 < 0.0 || cfg.adam.beta1 >= 1.0 || cfg.adam.beta2 < 0.0 ||
      cfg.adam.beta2 >= 1.0 || !(cfg.adam.eps > 0.0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
  validate(cfg.gen);
  validate(cfg.disc);
  if (cfg.gen.image_size != cfg.image_size || cfg.disc.image_size != cfg.image_size) {
    throw ConfigError("network configs disagree with image_size " +
                      std::to_string(cfg.image_size));
  }
  if (cfg.gen.in_channels != cfg.disc.in_channels) {
    throw ConfigError("generator and discriminator channel counts disagree");
  }
}

Models init_models(const TrainConfig& cfg) {
  validate(cfg);
  Models m;
  m.gen_cfg = cfg.gen;
  m.disc_cfg = cfg.disc;
  m.gen_st = init_generator(cfg.gen, mix_seed(cfg.seed, 1));
  m.gen_ts = init_generator(cfg.gen, mix_seed(cfg.seed, 2));
  m.disc_s = init_discriminator(cfg.disc, mix_seed(cfg.seed, 3));
  m.disc_t = init_discriminator(cfg.disc, mix_seed(cfg.seed, 4));
  return m;
}

namespace {

void check_term(const char* name, double v) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string("non-finite loss term: ") + name);
  }
}

ParamMap collect_grads(Tape& tape, const std::vector<ParamGroup>& groups) {
  ParamMap grads;
  for (const auto& group : groups) {
    for (auto& [name, p] : group.params->entries()) {
      grads.add(group.prefix + "/" + name, tape.grad_of(p));
    }
  }
  return grads;
}

}  // namespace

LossReport train_step(const Tensor& batch_s, const Tensor& batch_t, Models& models,
                      OptStates& states, const LossWeights& w) {
  validate(w);
  LossReport parts;

  // Phase 1: generators. Discriminator weights stay untracked, so gradient
  // flows through the score maps into the fakes but no D grads are built.
  Tensor fake_t, fake_s;
  ParamMap gen_grads;
  {
    Tape tape;
    models.gen_st.set_requires_grad(true);
    models.gen_ts.set_requires_grad(true);

    fake_t = generator_forward(models.gen_cfg, models.gen_st, batch_s);
    fake_s = generator_forward(models.gen_cfg, models.gen_ts, batch_t);
    Tensor rec_s = generator_forward(models.gen_cfg, models.gen_ts, fake_t);
    Tensor rec_t = generator_forward(models.gen_cfg, models.gen_st, fake_s);

    Tensor adv_f_s =
        adv_loss_generator(discriminator_forward(models.disc_cfg, models.disc_t, fake_t));
    Tensor adv_f_t =
        adv_loss_generator(discriminator_forward(models.disc_cfg, models.disc_s, fake_s));
    Tensor cyc = cycle_consistency_loss(batch_s, rec_s, batch_t, rec_t);
    Tensor grad = gradient_adjustment_loss(batch_s, fake_t, batch_t, fake_s, w.c_ga);

    parts.adv_f_s = adv_f_s.item();
    parts.adv_f_t = adv_f_t.item();
    parts.cyc = cyc.item();
    parts.grad = grad.item();
    check_term("adv_f_s", parts.adv_f_s);
    check_term("adv_f_t", parts.adv_f_t);
    check_term("cyc", parts.cyc);
    check_term("grad", parts.grad);

    Tensor total_f = add(add(add(adv_f_s, adv_f_t), scale(cyc, w.lambda_cyc)),
                         scale(grad, w.lambda_grad));
    tape.backward(total_f);
    gen_grads =
        collect_grads(tape, {{"gen_st", &models.gen_st}, {"gen_ts", &models.gen_ts}});
    models.gen_st.set_requires_grad(false);
    models.gen_ts.set_requires_grad(false);
    fake_t = fake_t.detach();
    fake_s = fake_s.detach();
  }
  // tape released before the optimizer mutates the parameters in place
  adam_step({{"gen_st", &models.gen_st}, {"gen_ts", &models.gen_ts}}, gen_grads,
            states.gen);

  // Phase 2: discriminators, with the (pre-update) fakes detached.
  ParamMap disc_grads;
  {
    Tape tape;
    models.disc_s.set_requires_grad(true);
    models.disc_t.set_requires_grad(true);

    Tensor adv_d_s = adv_loss_discriminator(
        discriminator_forward(models.disc_cfg, models.disc_t, batch_t),
        discriminator_forward(models.disc_cfg, models.disc_t, fake_t));
    Tensor adv_d_t = adv_loss_discriminator(
        discriminator_forward(models.disc_cfg, models.disc_s, batch_s),
        discriminator_forward(models.disc_cfg, models.disc_s, fake_s));

    parts.adv_d_s = adv_d_s.item();
    parts.adv_d_t = adv_d_t.item();
    check_term("adv_d_s", parts.adv_d_s);
    check_term("adv_d_t", parts.adv_d_t);

    Tensor total_d = add(adv_d_s, adv_d_t);
    tape.backward(total_d);
    disc_grads =
        collect_grads(tape, {{"disc_s", &models.disc_s}, {"disc_t", &models.disc_t}});
    models.disc_s.set_requires_grad(false);
    models.disc_t.set_requires_grad(false);
  }
  adam_step({{"disc_s", &models.disc_s}, {"disc_t", &models.disc_t}}, disc_grads,
            states.disc);

  return total_losses(parts, w);
}

std::vector<size_t> epoch_permutation(uint64_t seed, uint64_t domain_tag, int64_t epoch,
                                      size_t n) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(mix_seed(seed, domain_tag, static_cast<uint64_t>(epoch)));
  rng.shuffle(idx);
  return idx;
}

Tensor stack_batch(const std::vector<Tensor>& images, std::span<const size_t> indices) {
  if (indices.empty()) throw ConfigError("stack_batch: empty index set");
  const Shape& s = images.at(indices[0]).shape();
  if (s.size() != 3) {
    throw ShapeError("stack_batch: images must be [C,H,W], got " + shape_str(s));
  }
  Shape out_shape{static_cast<int64_t>(indices.size()), s[0], s[1], s[2]};
  std::vector<double> data;
  data.reserve(static_cast<size_t>(shape_numel(out_shape)));
  for (size_t i : indices) {
    const Tensor& img = images.at(i);
    if (img.shape() != s) {
      throw ShapeError("stack_batch: mixed image shapes " + shape_str(s) + " vs " +
                       shape_str(img.shape()));
    }
    auto v = img.values();
    data.insert(data.end(), v.begin(), v.end());
  }
  return Tensor(std::move(out_shape), std::move(data));
}

namespace {

std::vector<size_t> batch_indices(uint64_t seed, uint64_t tag, int64_t step, int batch,
                                  size_t n) {
  const int64_t epoch_len = static_cast<int64_t>(n) / batch;
  const int64_t g = step - 1;
  const int64_t epoch = g / epoch_len;
  const int64_t pos = g % epoch_len;
  std::vector<size_t> perm = epoch_permutation(seed, tag, epoch, n);
  return {perm.begin() + pos * batch, perm.begin() + (pos + 1) * batch};
}

ParamMap clone_params(const ParamMap& src) {
  ParamMap out;
  for (const auto& [name, t] : src.entries()) {
    out.add(name, Tensor(t.shape(), {t.values().begin(), t.values().end()}));
  }
  return out;
}

AdamState clone_state(const AdamState& src) {
  AdamState out;
  out.cfg = src.cfg;
  out.t = src.t;
  out.m = clone_params(src.m);
  out.v = clone_params(src.v);
  return out;
}

void write_csv_row(std::ofstream& csv, int64_t step, const LossReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                static_cast<long long>(step), r.adv_f_s, r.adv_f_t, r.adv_d_s, r.adv_d_t,
                r.cyc, r.grad, r.total_f, r.total_d);
  csv << buf << '\n';
}

Checkpoint snapshot(const TrainConfig& cfg, int64_t step, const Models& m,
                    const OptStates& s) {
  Checkpoint c;
  c.step = step;
  c.config = cfg;
  c.gen_st = clone_params(m.gen_st);
  c.gen_ts = clone_params(m.gen_ts);
  c.disc_s = clone_params(m.disc_s);
  c.disc_t = clone_params(m.disc_t);
  c.adam_gen = clone_state(s.gen);
  c.adam_disc = clone_state(s.disc);
  return c;
}

}  // namespace

Checkpoint train_loop(const TrainConfig& cfg, const std::vector<Tensor>& dataset_s,
                      const std::vector<Tensor>& dataset_t,
                      const std::filesystem::path& out_dir, const Checkpoint* resume) {
  validate(cfg);
  if (dataset_s.empty() || dataset_t.empty()) {
    throw ConfigError("train_loop: empty dataset");
  }
  if (static_cast<int>(dataset_s.size()) < cfg.batch_size ||
      static_cast<int>(dataset_t.size()) < cfg.batch_size) {
    throw ConfigError("train_loop: dataset smaller than one batch");
  }
  const Shape want{cfg.gen.in_channels, cfg.image_size, cfg.image_size};
  for (const auto* ds : {&dataset_s, &dataset_t}) {
    for (const Tensor& img : *ds) {
      if (img.shape() != want) {
        throw ShapeError("train_loop: image shape " + shape_str(img.shape()) +
                         " does not match configured " + shape_str(want));
      }
    }
  }

  Models models;
  OptStates states;
  states.gen.cfg = cfg.adam;
  states.disc.cfg = cfg.adam;
  int64_t start_step = 0;
  if (resume) {
    if (!(resume->config == cfg)) {
      throw ConfigError("train_loop: checkpoint config does not match requested config");
    }
    if (resume->step >= cfg.steps) {
      throw ConfigError("train_loop: checkpoint step " + std::to_string(resume->step) +
                        " is not before steps " + std::to_string(cfg.steps));
    }
    models.gen_cfg = cfg.gen;
    models.disc_cfg = cfg.disc;
    models.gen_st = clone_params(resume->gen_st);
    models.gen_ts = clone_params(resume->gen_ts);
    models.disc_s = clone_params(resume->disc_s);
    models.disc_t = clone_params(resume->disc_t);
    states.gen = clone_state(resume->adam_gen);
    states.disc = clone_state(resume->adam_disc);
    start_step = resume->step;
  } else {
    models = init_models(cfg);
  }

  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir / "loss_log.csv", std::ios::trunc);
  if (!csv) throw IoError("cannot write loss log in " + out_dir.string());
  csv << kLossCsvHeader << '\n';

  for (int64_t step = start_step + 1; step <= cfg.steps; ++step) {
    auto idx_s = batch_indices(cfg.seed, kDomainSourceTag, step, cfg.batch_size,
                               dataset_s.size());
    auto idx_t = batch_indices(cfg.seed, kDomainTargetTag, step, cfg.batch_size,
                               dataset_t.size());
    Tensor batch_s = stack_batch(dataset_s, idx_s);
    Tensor batch_t = stack_batch(dataset_t, idx_t);
    LossReport report = train_step(batch_s, batch_t, models, states, cfg.weights);
    write_csv_row(csv, step, report);

    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 &&
        step != cfg.steps) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_step_%06lld.ckpt",
                    static_cast<long long>(step));
      save_checkpoint(snapshot(cfg, step, models, states), out_dir / name);
    }
  }

  Checkpoint final_ckpt = snapshot(cfg, cfg.steps, models, states);
  save_checkpoint(final_ckpt, out_dir / "checkpoint_final.ckpt");
  csv.flush();
  if (!csv) throw IoError("write failure on loss log in " + out_dir.string());
  return final_ckpt;
}

}  // namespace gait
