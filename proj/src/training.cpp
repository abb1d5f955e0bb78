#include "plc/training.hpp"

#include "plc/errors.hpp"

namespace plc::train {

namespace fs = std::filesystem;

double LossRecord::get(const std::string& name) const {
  for (const auto& [k, v] : values)
    if (k == name) return v;
  throw ParameterError("no loss column '" + name + "'");
}

CsvLog::CsvLog(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  out_.open(path, std::ios::trunc);
  if (!out_) throw ConfigError("cannot write " + path.string());
  out_.precision(10);
}

void CsvLog::write(const LossRecord& r) {
  if (!header_written_) {
    out_ << "step";
    for (const auto& [k, v] : r.values) out_ << ',' << k;
    out_ << '\n';
    header_written_ = true;
  }
  out_ << r.step;
  for (const auto& [k, v] : r.values) out_ << ',' << v;
  out_ << '\n';
  out_.flush();
}

std::size_t steps_per_epoch(std::size_t corpus_size, std::size_t batch_size) {
  return std::max<std::size_t>(1, (corpus_size + batch_size - 1) / batch_size);
}

std::size_t planned_steps(std::size_t steps, std::size_t epochs, std::size_t corpus_size, std::size_t batch_size) {
  return epochs > 0 ? epochs * steps_per_epoch(corpus_size, batch_size) : steps;
}

namespace {

// Independent, reproducible streams derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{seed, stream};
  std::uint64_t out[1];
  seq.generate(reinterpret_cast<std::uint32_t*>(out), reinterpret_cast<std::uint32_t*>(out) + 2);
  return out[0];
}

enum Stream : std::uint64_t { kStage1Data = 1, kStage1Noise, kStage2Data, kDiscriminatorInit };

std::vector<NamedParameter> collect(std::initializer_list<std::pair<const char*, const Module*>> parts) {
  std::vector<NamedParameter> out;
  for (const auto& [prefix, m] : parts) {
    auto p = m->named_parameters(prefix);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

}  // namespace

ContrastiveTrainer::ContrastiveTrainer(model::ConcealmentModel& model, const Corpus& corpus, const RunConfig& config)
    : model_(model),
      config_((config.validate(), config)),
      sampler_(corpus, config.data, config.stage1.batch_size, derive_seed(config.seed, kStage1Data)),
      adam_(collect({{"semantic", &model.semantic()}, {"quantizer", &model.quantizer()}}),
            AdamConfig{config.stage1.lr, config.stage1.beta1, config.stage1.beta2}),
      rng_(derive_seed(config.seed, kStage1Noise)) {
  model_.semantic().set_trainable(true);
  model_.quantizer().set_trainable(true);
}

LossRecord ContrastiveTrainer::step() {
  constexpr int kMaxRedraws = 100;
  const double tau = model::anneal_temperature(step_, config_.model.quantizer);
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    Batch b = sampler_.next();
    model::PretrainBatch pb{model_.analyze(b.lossy), model_.analyze(b.clean), b.lossmap};
    adam_.zero_grad();
    model::PretrainLoss loss =
        model::pretrain_loss(model_.semantic(), model_.quantizer(), pb, tau, config_.contrastive, rng_);
    if (loss.skipped) continue;
    backward(loss.total);
    adam_.step();
    adam_.zero_grad();
    ++step_;
    LossRecord r;
    r.step = step_;
    r.values = {{"total", loss.total.item()},
                {"contrastive", loss.contrastive.item()},
                {"diversity", loss.diversity.item()},
                {"tau", tau},
                {"targets", double(loss.targets)}};
    return r;
  }
  throw ConfigError("no batch with enough lost frames after 100 draws; raise data.loss_rate_min");
}

Checkpoint ContrastiveTrainer::checkpoint() const {
  Checkpoint ck;
  ck.stage = kStageContrastive;
  ck.step = step_;
  ck.seed = config_.seed;
  ck.config = to_json(config_);
  ck.parameters = snapshot(model_.named_parameters());
  ck.optimizers.emplace_back("stage1", adam_.state());
  ck.optimizer_steps.emplace_back("stage1", adam_.steps());
  return ck;
}

std::vector<std::string> AdversarialTrainer::frozen_groups() { return {"semantic", "quantizer"}; }

AdversarialTrainer::AdversarialTrainer(model::ConcealmentModel& model, const Corpus& corpus, const RunConfig& config)
    : model_(model),
      config_((config.validate(), config)),
      sampler_(corpus, config.data, config.stage2.batch_size, derive_seed(config.seed, kStage2Data)),
      disc_init_(derive_seed(config.seed, kDiscriminatorInit)),
      disc_(config.discriminator, disc_init_),
      spectral_(config.spectral),
      g_adam_(collect({{"auxiliary", &model.auxiliary()}, {"fusion", &model.fusion()}, {"generator", &model.generator()}}),
              AdamConfig{config.stage2.lr, config.stage2.beta1, config.stage2.beta2}),
      d_adam_(disc_.named_parameters("discriminator"),
              AdamConfig{config.stage2.lr, config.stage2.beta1, config.stage2.beta2}),
      epoch_steps_(steps_per_epoch(corpus.size(), config.stage2.batch_size)) {
  model_.semantic().set_trainable(false);
  model_.quantizer().set_trainable(false);
}

LossRecord AdversarialTrainer::step() {
  const Batch b = sampler_.next();
  const Var target(b.clean);
  const Var pred = model_.forward(b.lossy, b.lossmap);

  // Discriminator update on the detached prediction.
  disc_.set_trainable(true);
  d_adam_.zero_grad();
  const Var d_loss = model::discriminator_loss(disc_.forward(target), disc_.forward(detach(pred)));
  backward(d_loss);
  d_adam_.step();
  d_adam_.zero_grad();

  // Generator update through the refreshed discriminators, whose weights
  // receive no gradient here.
  disc_.set_trainable(false);
  g_adam_.zero_grad();
  model::DiscriminatorOutput real;
  {
    NoGradGuard guard;
    real = disc_.forward(target);
  }
  const model::DiscriminatorOutput fake = disc_.forward(pred);
  const model::GeneratorLoss g = model::generator_loss(pred, target, real, fake, spectral_, config_.loss_weights);
  backward(g.total);
  g_adam_.step();
  g_adam_.zero_grad();
  disc_.set_trainable(true);

  ++step_;
  if (step_ % epoch_steps_ == 0) {
    g_adam_.set_lr(g_adam_.lr() * config_.stage2.lr_decay);
    d_adam_.set_lr(d_adam_.lr() * config_.stage2.lr_decay);
  }
  LossRecord r;
  r.step = step_;
  r.values = {{"d_loss", d_loss.item()}, {"g_total", g.total.item()}, {"adv", g.adv.item()},
              {"fm", g.fm.item()},       {"bin", g.bin.item()},       {"mel", g.mel.item()},
              {"lr", g_adam_.lr()}};
  return r;
}

Checkpoint AdversarialTrainer::checkpoint() const {
  Checkpoint ck;
  ck.stage = kStageAdversarial;
  ck.step = step_;
  ck.seed = config_.seed;
  ck.frozen = frozen_groups();
  ck.config = to_json(config_);
  ck.parameters = snapshot(model_.named_parameters());
  const NamedTensors d = snapshot(disc_.named_parameters("discriminator"));
  ck.parameters.insert(ck.parameters.end(), d.begin(), d.end());
  ck.optimizers.emplace_back("generator", g_adam_.state());
  ck.optimizers.emplace_back("discriminator", d_adam_.state());
  ck.optimizer_steps.emplace_back("generator", g_adam_.steps());
  ck.optimizer_steps.emplace_back("discriminator", d_adam_.steps());
  return ck;
}

Checkpoint train_stage1(const Corpus& corpus, const RunConfig& config, const fs::path& out_dir,
                        const Observer& observer) {
  if (corpus.empty()) throw ConfigError("stage 1 needs a non-empty corpus");
  config.validate();
  model::ConcealmentModel model(config.model, config.seed);
  ContrastiveTrainer trainer(model, corpus, config);
  CsvLog log(out_dir / "train_log.csv");
  const std::size_t steps = planned_steps(config.stage1.steps, config.stage1.epochs, corpus.size(), config.stage1.batch_size);
  for (std::size_t i = 0; i < steps; ++i) {
    const LossRecord r = trainer.step();
    log.write(r);
    if (observer) observer(r);
  }
  Checkpoint ck = trainer.checkpoint();
  save_checkpoint(out_dir, ck);
  return ck;
}

std::unique_ptr<model::ConcealmentModel> load_model(const Checkpoint& ck) {
  const RunConfig config = from_json(ck.config, RunConfig{});
  auto model = std::make_unique<model::ConcealmentModel>(config.model, config.seed);
  restore(ck.parameters, model->named_parameters());
  return model;
}

std::unique_ptr<model::ConcealmentModel> load_model(const fs::path& dir) { return load_model(load_checkpoint(dir)); }

Checkpoint train_stage2(const Corpus& corpus, const RunConfig& config, const fs::path& pretrained_dir,
                        const fs::path& out_dir, const Observer& observer) {
  if (corpus.empty()) throw ConfigError("stage 2 needs a non-empty corpus");
  if (pretrained_dir.empty() || !fs::exists(pretrained_dir / kManifestName)) {
    throw ConfigError("stage 2 needs a pretrained checkpoint; none at '" + pretrained_dir.string() + "'");
  }
  config.validate();
  const Checkpoint pre = load_checkpoint(pretrained_dir);
  model::ConcealmentModel model(config.model, config.seed);
  restore(pre.parameters, model.named_parameters());
  AdversarialTrainer trainer(model, corpus, config);
  CsvLog log(out_dir / "train_log.csv");
  const std::size_t steps = planned_steps(config.stage2.steps, config.stage2.epochs, corpus.size(), config.stage2.batch_size);
  for (std::size_t i = 0; i < steps; ++i) {
    const LossRecord r = trainer.step();
    log.write(r);
    if (observer) observer(r);
  }
  Checkpoint ck = trainer.checkpoint();
  save_checkpoint(out_dir, ck);
  return ck;
}

}  // namespace plc::train
