#include "cyclehair/trainer.hpp"

#include <algorithm>
#include <cinttypes>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "cyclehair/errors.hpp"
#include "cyclehair/tensor_io.hpp"

namespace cyclehair {

namespace fs = std::filesystem;

namespace {

// The random VGG16 stand-in is shared by every run so perceptual losses are
// comparable across configs.
constexpr std::uint64_t kExtractorSeed = 16;

enum SeedStream : std::uint64_t { kSeedG = 1, kSeedF, kSeedDx, kSeedDy, kSeedEmbedding, kSeedRng };

void set_requires_grad(torch::nn::Module& module, bool flag) {
  for (auto& p : module.parameters()) p.set_requires_grad(flag);
}

bool all_finite(const torch::nn::Module& module) {
  for (const auto& p : module.parameters()) {
    if (p.numel() > 0 && !torch::isfinite(p).all().item<bool>()) return false;
  }
  return true;
}

std::string format_value(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.9g", value);
  return buffer;
}

std::unique_ptr<torch::optim::Adam> make_adam(std::vector<torch::Tensor> params, double lr) {
  return std::make_unique<torch::optim::Adam>(std::move(params),
                                              torch::optim::AdamOptions(lr).betas(std::make_tuple(0.5, 0.999)));
}

void append_optimizer_state(std::vector<NamedTensor>& out, const std::string& prefix, torch::optim::Adam& optimizer) {
  const auto& params = optimizer.param_groups().front().params();
  auto& states = optimizer.state();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto it = states.find(params[i].unsafeGetTensorImpl());
    if (it == states.end()) continue;
    const auto& state = static_cast<const torch::optim::AdamParamState&>(*it->second);
    const std::string key = prefix + "." + std::to_string(i);
    out.push_back({key + ".step", torch::full({1}, static_cast<double>(state.step()), torch::kFloat64)});
    out.push_back({key + ".exp_avg", state.exp_avg()});
    out.push_back({key + ".exp_avg_sq", state.exp_avg_sq()});
  }
}

void restore_optimizer_state(const ParamFile& file, const std::string& prefix, torch::optim::Adam& optimizer) {
  const auto& params = optimizer.param_groups().front().params();
  auto& states = optimizer.state();
  states.clear();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string key = prefix + "." + std::to_string(i);
    if (!file.contains(key + ".step")) continue;
    auto state = std::make_unique<torch::optim::AdamParamState>();
    state->step(static_cast<std::int64_t>(file.get(key + ".step").item<double>()));
    const auto& exp_avg = file.get(key + ".exp_avg");
    const auto& exp_avg_sq = file.get(key + ".exp_avg_sq");
    if (!exp_avg.sizes().equals(params[i].sizes()) || !exp_avg_sq.sizes().equals(params[i].sizes())) {
      throw CheckpointError("optimizer state '" + key + "' does not match its parameter");
    }
    state->exp_avg(exp_avg.to(params[i].scalar_type()).clone());
    state->exp_avg_sq(exp_avg_sq.to(params[i].scalar_type()).clone());
    states[params[i].unsafeGetTensorImpl()] = std::move(state);
  }
}

void append_pool(std::vector<NamedTensor>& out, const std::string& prefix, const ImagePool& pool) {
  for (std::size_t i = 0; i < pool.entries().size(); ++i) {
    const auto& entry = pool.entries()[i];
    const std::string key = prefix + "." + std::to_string(i);
    auto bits = torch::zeros({static_cast<std::int64_t>(entry.condition.size())});
    for (std::size_t k = 0; k < entry.condition.size(); ++k) bits[k] = static_cast<float>(entry.condition.bits[k]);
    out.push_back({key + ".image", entry.image});
    out.push_back({key + ".condition", bits});
  }
}

std::vector<ImagePool::Entry> read_pool(const ParamFile& file, const std::string& prefix, std::size_t count) {
  std::vector<ImagePool::Entry> entries;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string key = prefix + "." + std::to_string(i);
    ImagePool::Entry entry;
    entry.image = file.get(key + ".image").clone();
    const auto bits = file.get(key + ".condition");
    for (std::int64_t k = 0; k < bits.numel(); ++k) entry.condition.bits.push_back(bits[k].item<float>() > 0.5f);
    entries.push_back(std::move(entry));
  }
  return entries;
}

std::map<std::string, std::string> parse_state_header(const std::string& spec) {
  std::istringstream in(spec);
  std::string word;
  in >> word;
  if (word != "train-state") throw CheckpointError("train_state.bin has an unexpected header");
  std::map<std::string, std::string> fields;
  while (in >> word) {
    const auto eq = word.find('=');
    if (eq != std::string::npos) fields[word.substr(0, eq)] = word.substr(eq + 1);
  }
  for (const char* key : {"epoch", "step", "pool_x", "pool_y"}) {
    if (!fields.count(key)) throw CheckpointError(std::string("train_state.bin lacks '") + key + "'");
  }
  return fields;
}

// One planned training step: which images and conditions it consumes.
struct PlannedStep {
  std::vector<fs::path> x_paths;
  std::vector<fs::path> y_paths;
  std::vector<ConditionVector> conditions;
};

struct LoadedStep {
  torch::Tensor x;
  torch::Tensor y;
  std::vector<ConditionVector> conditions;
  std::exception_ptr error;
};

std::vector<PlannedStep> plan_epoch(const TrainingData& data, int batch_size, Rng& rng) {
  std::vector<std::size_t> order_x(data.x_images.size());
  std::vector<std::size_t> order_y(data.y_images.size());
  for (std::size_t i = 0; i < order_x.size(); ++i) order_x[i] = i;
  for (std::size_t i = 0; i < order_y.size(); ++i) order_y[i] = i;
  shuffle_in_place(order_x, rng);
  shuffle_in_place(order_y, rng);

  const std::size_t items = std::max(order_x.size(), order_y.size());
  std::vector<PlannedStep> plan;
  for (std::size_t start = 0; start < items; start += batch_size) {
    PlannedStep step;
    for (std::size_t i = start; i < std::min(items, start + batch_size); ++i) {
      step.x_paths.push_back(data.x_images[order_x[i % order_x.size()]]);
      const std::size_t yi = order_y[i % order_y.size()];
      step.y_paths.push_back(data.y_images[yi]);
      step.conditions.push_back(data.y_conditions[yi]);
    }
    plan.push_back(std::move(step));
  }
  return plan;
}

// Decodes planned batches on a worker thread, at most `depth` ahead of the
// consumer. Output order equals plan order.
class Prefetcher {
 public:
  Prefetcher(std::vector<PlannedStep> plan, int image_size, std::size_t depth)
      : plan_(std::move(plan)), image_size_(image_size), depth_(std::max<std::size_t>(depth, 1)) {
    worker_ = std::thread([this] { work(); });
  }

  ~Prefetcher() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    changed_.notify_all();
    worker_.join();
  }

  Prefetcher(const Prefetcher&) = delete;
  Prefetcher& operator=(const Prefetcher&) = delete;

  std::size_t size() const { return plan_.size(); }

  LoadedStep next() {
    std::unique_lock lock(mutex_);
    changed_.wait(lock, [this] { return !ready_.empty(); });
    LoadedStep item = std::move(ready_.front());
    ready_.pop_front();
    changed_.notify_all();
    if (item.error) std::rethrow_exception(item.error);
    return item;
  }

 private:
  void work() {
    for (const auto& step : plan_) {
      LoadedStep item;
      try {
        std::vector<corpus::Image> xs;
        std::vector<corpus::Image> ys;
        for (const auto& p : step.x_paths) xs.push_back(corpus::load_image(p, image_size_));
        for (const auto& p : step.y_paths) ys.push_back(corpus::load_image(p, image_size_));
        item.x = to_batch(xs);
        item.y = to_batch(ys);
        item.conditions = step.conditions;
      } catch (...) {
        item.error = std::current_exception();
      }
      std::unique_lock lock(mutex_);
      changed_.wait(lock, [this] { return stopping_ || ready_.size() < depth_; });
      if (stopping_) return;
      ready_.push_back(std::move(item));
      changed_.notify_all();
    }
  }

  std::vector<PlannedStep> plan_;
  int image_size_;
  std::size_t depth_;
  std::mutex mutex_;
  std::condition_variable changed_;
  std::deque<LoadedStep> ready_;
  bool stopping_ = false;
  std::thread worker_;
};

void prune_checkpoints(const fs::path& run_dir, int keep) {
  std::vector<std::pair<long, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    const auto name = entry.path().filename().string();
    if (!entry.is_directory() || name.rfind("epoch_", 0) != 0) continue;
    try {
      found.emplace_back(std::stol(name.substr(6)), entry.path());
    } catch (const std::exception&) {
    }
  }
  std::sort(found.begin(), found.end());
  const auto excess = static_cast<long>(found.size()) - keep;
  for (long i = 0; i < excess; ++i) fs::remove_all(found[i].second);
}

void truncate_metrics(const fs::path& path, std::int64_t last_step) {
  std::vector<std::string> kept;
  {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoll(line.substr(0, line.find('\t'))) <= last_step) kept.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  for (const auto& line : kept) out << line << '\n';
}

void write_run_manifest(const fs::path& path, const ExperimentConfig& config, const FeatureExtractorImpl* extractor,
                        const std::string& started_from, const std::string& final_checkpoint) {
  std::ostringstream out;
  out << "run = " << config.name << '\n'
      << "generator = " << generator_label(config) << '\n'
      << "loss_regime = " << config.loss_regime.code() << '\n'
      << "feature_extractor = " << (extractor ? extractor->provenance() : std::string("none")) << '\n'
      << "started_from = " << started_from << '\n'
      << "final_checkpoint = " << final_checkpoint << '\n';
  write_file_atomically(path, out.str());
}

}  // namespace

double lr_at(int epoch, const Schedule& schedule) {
  if (epoch < 0 || epoch > schedule.total_epochs) {
    throw ConfigError("epoch " + std::to_string(epoch) + " is outside [0, " + std::to_string(schedule.total_epochs) +
                      "]");
  }
  if (epoch < schedule.hold_epochs) return schedule.base_lr;
  if (epoch >= schedule.total_epochs) return 0.0;
  const double fraction = static_cast<double>(schedule.total_epochs - epoch) /
                          static_cast<double>(schedule.total_epochs - schedule.hold_epochs);
  return schedule.base_lr * fraction;
}

std::pair<torch::Tensor, std::vector<ConditionVector>> ImagePool::query(const torch::Tensor& fresh,
                                                                        const std::vector<ConditionVector>& conditions,
                                                                        Rng& rng) {
  if (fresh.dim() != 4) throw ShapeError("image pool expects an (n, c, h, w) batch");
  if (static_cast<std::int64_t>(conditions.size()) != fresh.size(0)) {
    throw ShapeError("image pool needs one condition per image");
  }
  if (capacity_ == 0) return {fresh, conditions};

  std::vector<torch::Tensor> images;
  std::vector<ConditionVector> chosen;
  for (std::int64_t i = 0; i < fresh.size(0); ++i) {
    auto image = fresh[i].detach().clone();
    if (static_cast<int>(entries_.size()) < capacity_) {
      entries_.push_back({image, conditions[i]});
      images.push_back(image);
      chosen.push_back(conditions[i]);
    } else if (uniform_unit(rng) < 0.5) {
      const std::size_t slot = uniform_index(rng, entries_.size());
      images.push_back(entries_[slot].image);
      chosen.push_back(entries_[slot].condition);
      entries_[slot] = {image, conditions[i]};
    } else {
      images.push_back(image);
      chosen.push_back(conditions[i]);
    }
  }
  return {torch::stack(images), chosen};
}

torch::Tensor ImagePool::query(const torch::Tensor& fresh, Rng& rng) {
  std::vector<ConditionVector> none(static_cast<std::size_t>(fresh.dim() == 4 ? fresh.size(0) : 0));
  return query(fresh, none, rng).first;
}

void ImagePool::restore(std::vector<Entry> entries) {
  if (static_cast<int>(entries.size()) > capacity_) throw CheckpointError("image pool state exceeds its capacity");
  entries_ = std::move(entries);
}

TrainState TrainState::initialize(const ExperimentConfig& config) {
  if (const auto violations = validate(config); !violations.empty()) {
    std::string message = "invalid config '" + config.name + "':";
    for (const auto& v : violations) message += "\n  " + v;
    throw ConfigError(message);
  }
  TrainState state;
  state.config = config;
  state.vocabulary = ConditionVocabulary::for_mode(config.condition_mode);
  state.G = build_generator(state.generator_spec(), derive_seed(config.seed, kSeedG));
  state.F = build_generator(state.generator_spec(), derive_seed(config.seed, kSeedF));
  state.Dx = build_patch_discriminator(state.discriminator_spec(), derive_seed(config.seed, kSeedDx));
  state.Dy = build_patch_discriminator(state.discriminator_spec(), derive_seed(config.seed, kSeedDy));
  const int width = state.plane_width();
  state.embedding = ConditionEmbedding(static_cast<std::int64_t>(state.vocabulary.size()), width);
  state.embedding->reset_parameters(derive_seed(config.seed, kSeedEmbedding));

  const double lr = lr_at(0, config.schedule);
  std::vector<torch::Tensor> generator_params = state.G->parameters();
  for (auto& p : state.F->parameters()) generator_params.push_back(p);
  if (state.embedding->table.numel() > 0) generator_params.push_back(state.embedding->table);
  state.opt_G = make_adam(generator_params, lr);
  state.opt_Dx = make_adam(state.Dx->parameters(), lr);
  state.opt_Dy = make_adam(state.Dy->parameters(), lr);
  state.pool_x = ImagePool(config.pool_size);
  state.pool_y = ImagePool(config.pool_size);
  state.rng = Rng(derive_seed(config.seed, kSeedRng));
  return state;
}

GeneratorSpec generator_spec_for(const ExperimentConfig& config) {
  const int in_channels = 3 + embedding_width(config.condition_mode, config.embedding_dim);
  if (config.generator_family == GeneratorFamily::UNet) {
    return GeneratorSpec::unet(config.image_size, in_channels, config.base_width);
  }
  GeneratorSpec spec = GeneratorSpec::resnet(config.image_size, in_channels, config.base_width);
  spec.n_blocks = config.n_blocks;
  return spec;
}

DiscriminatorSpec discriminator_spec_for(const ExperimentConfig& config) {
  DiscriminatorSpec spec;
  spec.in_channels = 3 + embedding_width(config.condition_mode, config.embedding_dim);
  return spec;
}

void TrainState::set_learning_rate(double lr) {
  for (auto* optimizer : {opt_G.get(), opt_Dx.get(), opt_Dy.get()}) {
    for (auto& group : optimizer->param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
}

void TrainState::save(const fs::path& dir) const {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CheckpointError(dir.string() + ": " + ec.message());
  save_module(dir / "G.bin", G->spec().describe(), *G);
  save_module(dir / "F.bin", F->spec().describe(), *F);
  save_module(dir / "Dx.bin", Dx->spec().describe(), *Dx);
  save_module(dir / "Dy.bin", Dy->spec().describe(), *Dy);
  save_module(dir / "embedding.bin",
              "embedding classes=" + std::to_string(embedding->n_classes()) + " dim=" + std::to_string(embedding->dim()),
              *embedding);
  write_file_atomically(dir / "config.snapshot", format_config(config));
  write_file_atomically(dir / "rng.state", save_rng(rng) + "\n");

  std::vector<NamedTensor> tensors;
  append_optimizer_state(tensors, "opt_G", *opt_G);
  append_optimizer_state(tensors, "opt_Dx", *opt_Dx);
  append_optimizer_state(tensors, "opt_Dy", *opt_Dy);
  append_pool(tensors, "pool_x", pool_x);
  append_pool(tensors, "pool_y", pool_y);
  const std::string header = "train-state epoch=" + std::to_string(epoch) + " step=" + std::to_string(step) +
                             " pool_x=" + std::to_string(pool_x.size()) + " pool_y=" + std::to_string(pool_y.size());
  write_param_file(dir / "train_state.bin", header, tensors);
}

TrainState TrainState::load(const fs::path& dir) {
  ExperimentConfig config;
  try {
    config = parse_config(read_file(dir / "config.snapshot"));
  } catch (const ConfigError& e) {
    throw CheckpointError((dir / "config.snapshot").string() + ": " + e.what());
  }
  TrainState state = initialize(config);
  load_module(*state.G, read_param_file(dir / "G.bin"));
  load_module(*state.F, read_param_file(dir / "F.bin"));
  load_module(*state.Dx, read_param_file(dir / "Dx.bin"));
  load_module(*state.Dy, read_param_file(dir / "Dy.bin"));
  load_module(*state.embedding, read_param_file(dir / "embedding.bin"));
  state.rng = load_rng(read_file(dir / "rng.state"));

  const auto train_state = read_param_file(dir / "train_state.bin");
  const auto fields = parse_state_header(train_state.spec);
  state.epoch = std::stoi(fields.at("epoch"));
  state.step = std::stoll(fields.at("step"));
  restore_optimizer_state(train_state, "opt_G", *state.opt_G);
  restore_optimizer_state(train_state, "opt_Dx", *state.opt_Dx);
  restore_optimizer_state(train_state, "opt_Dy", *state.opt_Dy);
  state.pool_x.restore(read_pool(train_state, "pool_x", std::stoul(fields.at("pool_x"))));
  state.pool_y.restore(read_pool(train_state, "pool_y", std::stoul(fields.at("pool_y"))));
  state.last_checkpoint = dir.string();
  return state;
}

LossReport train_step(TrainState& s, const torch::Tensor& x, const torch::Tensor& y,
                      const std::vector<ConditionVector>& cond_y, FeatureExtractorImpl* extractor) {
  if (x.dim() != 4 || y.dim() != 4 || x.size(1) != 3 || y.size(1) != 3 || !x.sizes().equals(y.sizes())) {
    throw ShapeError("train_step expects two (n, 3, h, w) batches of equal shape");
  }
  if (static_cast<std::int64_t>(cond_y.size()) != y.size(0)) throw ShapeError("one condition per hairy image required");
  for (const auto& c : cond_y) {
    if (c.size() != s.vocabulary.size()) throw ShapeError("condition length does not match the vocabulary");
  }
  const auto h = x.size(2);
  const auto w = x.size(3);

  LossReport report;
  try {
    // Generator half: G and F (and the embedding) against adversarial plus
    // reconstruction terms. Discriminators are frozen and see fixed planes.
    set_requires_grad(*s.Dx, false);
    set_requires_grad(*s.Dy, false);
    s.opt_G->zero_grad();
    const auto planes = embed_broadcast(cond_y, s.embedding->table, h, w);
    const auto fixed_planes = planes.detach();
    const auto fake_y = forward_generator(*s.G, inject(x, planes));
    const auto rec_x = forward_generator(*s.F, inject(fake_y, planes));
    const auto fake_x = forward_generator(*s.F, inject(y, planes));
    const auto rec_y = forward_generator(*s.G, inject(fake_x, planes));

    GeneratorParts parts;
    parts.gan_xy = gan_loss(forward_discriminator(*s.Dy, inject(fake_y, fixed_planes)), true);
    parts.gan_yx = gan_loss(forward_discriminator(*s.Dx, inject(fake_x, fixed_planes)), true);
    parts.x = x;
    parts.rec_x = rec_x;
    parts.y = y;
    parts.rec_y = rec_y;
    const auto objective = generator_objective(s.config.loss_regime, parts, extractor);
    report.loss_G = objective.total.item<double>();
    if (!std::isfinite(report.loss_G)) throw NumericError("generator loss is not finite");
    objective.total.backward();
    s.opt_G->step();
    set_requires_grad(*s.Dx, true);
    set_requires_grad(*s.Dy, true);

    // Discriminator half, on pooled (detached) fakes.
    const auto table = s.embedding->table.detach();
    const auto real_planes = embed_broadcast(cond_y, table, h, w);
    const auto [pooled_y, pooled_y_cond] = s.pool_y.query(fake_y.detach(), cond_y, s.rng);
    const auto [pooled_x, pooled_x_cond] = s.pool_x.query(fake_x.detach(), cond_y, s.rng);

    s.opt_Dy->zero_grad();
    const auto d_y = discriminator_objective(
        forward_discriminator(*s.Dy, inject(y, real_planes)),
        forward_discriminator(*s.Dy, inject(pooled_y, embed_broadcast(pooled_y_cond, table, h, w))));
    d_y.backward();
    s.opt_Dy->step();

    s.opt_Dx->zero_grad();
    const auto d_x = discriminator_objective(
        forward_discriminator(*s.Dx, inject(x, real_planes)),
        forward_discriminator(*s.Dx, inject(pooled_x, embed_broadcast(pooled_x_cond, table, h, w))));
    d_x.backward();
    s.opt_Dx->step();

    report.loss_D_x = d_x.item<double>();
    report.loss_D_y = d_y.item<double>();
    std::unordered_map<std::string, double> values;
    for (const auto& [name, value] : objective.terms) values[name] = value.item<double>();
    values["d_x"] = report.loss_D_x;
    values["d_y"] = report.loss_D_y;
    for (const auto& name : term_order()) {
      if (const auto it = values.find(name); it != values.end()) report.terms.emplace_back(name, it->second);
    }
  } catch (const NumericAbort&) {
    throw;
  } catch (const NumericError& e) {
    set_requires_grad(*s.Dx, true);
    set_requires_grad(*s.Dy, true);
    throw NumericAbort(std::string("step ") + std::to_string(s.step + 1) + ": " + e.what(), s.last_checkpoint);
  }

  if (!report.all_finite() || !all_finite(*s.G) || !all_finite(*s.F) || !all_finite(*s.Dx) || !all_finite(*s.Dy) ||
      !all_finite(*s.embedding)) {
    throw NumericAbort("step " + std::to_string(s.step + 1) + ": non-finite loss or parameter", s.last_checkpoint);
  }
  ++s.step;
  return report;
}

TrainingData load_training_data(const fs::path& data_dir, const ExperimentConfig& config) {
  const auto attributes = corpus::read_attribute_file(data_dir / "attributes.txt");
  std::string root;
  {
    std::ifstream in(data_dir / "image_root.txt");
    if (!in || !std::getline(in, root)) throw MalformedManifest((data_dir / "image_root.txt").string() + ": missing");
  }
  std::unordered_map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < attributes.records.size(); ++i) by_name[attributes.records[i].filename] = i;

  const auto vocabulary = ConditionVocabulary::for_mode(config.condition_mode);
  const auto take = [&](const char* list, bool hairy, TrainingData& data) {
    const auto names = corpus::read_filename_list(data_dir / list);
    if (static_cast<int>(names.size()) < config.n_train_images) {
      throw InsufficientRecords(std::string(list) + " lists " + std::to_string(names.size()) + " images, config '" +
                                config.name + "' needs " + std::to_string(config.n_train_images));
    }
    for (int i = 0; i < config.n_train_images; ++i) {
      const auto path = fs::path(root) / names[i];
      if (!hairy) {
        data.x_images.push_back(path);
        continue;
      }
      const auto it = by_name.find(names[i]);
      if (it == by_name.end()) throw MalformedManifest("'" + names[i] + "' is missing from attributes.txt");
      data.y_images.push_back(path);
      data.y_conditions.push_back(encode(attributes, attributes.records[it->second], vocabulary));
    }
  };
  TrainingData data;
  take("trainX.txt", false, data);
  take("trainY.txt", true, data);
  return data;
}

std::string format_metrics_line(std::int64_t step, int epoch, const LossReport& report, double lr) {
  std::string line = std::to_string(step) + '\t' + std::to_string(epoch);
  for (const auto& [name, value] : report.terms) line += '\t' + name + '=' + format_value(value);
  line += "\tloss_G=" + format_value(report.loss_G);
  line += "\tlr=" + format_value(lr);
  return line;
}

FeatureExtractor make_extractor_for(const ExperimentConfig& config, const std::optional<fs::path>& weights) {
  if (!config.loss_regime.use_perceptual) return FeatureExtractor(nullptr);
  if (weights) return load_vgg16_extractor(*weights);
  return make_vgg16_extractor(kExtractorSeed);
}

fs::path resolve_checkpoint(const fs::path& dir) {
  if (fs::exists(dir / "G.bin")) return dir;
  std::pair<long, fs::path> best{-1, {}};
  if (fs::is_directory(dir)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (!entry.is_directory() || name.rfind("epoch_", 0) != 0 || !fs::exists(entry.path() / "G.bin")) continue;
      try {
        const long n = std::stol(name.substr(6));
        if (n > best.first) best = {n, entry.path()};
      } catch (const std::exception&) {
      }
    }
  }
  if (best.first < 0) throw CheckpointError(dir.string() + ": no checkpoint found");
  return best.second;
}

torch::Tensor to_batch(const std::vector<corpus::Image>& images) {
  if (images.empty()) throw ShapeError("cannot batch zero images");
  std::vector<torch::Tensor> items;
  for (const auto& image : images) {
    if (image.channels != images.front().channels || image.height != images.front().height ||
        image.width != images.front().width) {
      throw ShapeError("images in a batch must share one shape");
    }
    items.push_back(torch::from_blob(const_cast<float*>(image.data.data()), {image.channels, image.height, image.width},
                                     torch::kFloat32)
                        .clone());
  }
  return torch::stack(items);
}

fs::path run(const ExperimentConfig& config, const TrainingData& data, const RunOptions& options) {
  if (data.x_images.empty() || data.y_images.empty()) throw InsufficientRecords("both domains need training images");
  if (data.y_conditions.size() != data.y_images.size()) throw ShapeError("one condition per hairy image required");

  auto extractor = make_extractor_for(config, options.extractor_weights);
  TrainState state = options.resume_from ? TrainState::load(*options.resume_from) : TrainState::initialize(config);
  if (options.resume_from && !(state.config == config)) {
    throw ConfigError(options.resume_from->string() + " was written by a different config");
  }

  const fs::path run_dir = options.out_dir / config.name;
  std::error_code ec;
  fs::create_directories(run_dir, ec);
  if (ec) throw CheckpointError(run_dir.string() + ": " + ec.message());
  const fs::path metrics_path = run_dir / "metrics.log";
  const fs::path manifest_path = run_dir / "manifest.txt";
  const std::string started_from =
      options.resume_from ? "resume " + options.resume_from->string() : std::string("fresh");
  if (options.resume_from) {
    truncate_metrics(metrics_path, state.step);
  } else {
    std::ofstream(metrics_path, std::ios::trunc);
  }
  write_run_manifest(manifest_path, config, extractor.is_empty() ? nullptr : extractor.get(), started_from, "");

  std::ofstream metrics(metrics_path, std::ios::app);
  if (!metrics) throw CheckpointError(metrics_path.string() + ": cannot open metrics log");

  fs::path latest = state.last_checkpoint;
  const int total = config.schedule.total_epochs;
  while (state.epoch < total) {
    const double lr = lr_at(state.epoch, config.schedule);
    state.set_learning_rate(lr);
    Prefetcher prefetch(plan_epoch(data, config.batch_size, state.rng), config.image_size, options.prefetch_depth);
    for (std::size_t i = 0; i < prefetch.size(); ++i) {
      auto batch = prefetch.next();
      const auto report = train_step(state, batch.x, batch.y, batch.conditions,
                                     extractor.is_empty() ? nullptr : extractor.get());
      const auto line = format_metrics_line(state.step, state.epoch + 1, report, lr);
      metrics << line << '\n';
      metrics.flush();
      if (options.on_step) options.on_step(line);
    }
    state.epoch += 1;

    const bool pause = options.stop_after_epoch && state.epoch >= *options.stop_after_epoch;
    if (state.epoch % config.checkpoint_every == 0 || state.epoch == total || pause) {
      latest = run_dir / ("epoch_" + std::to_string(state.epoch));
      state.save(latest);
      write_run_manifest(latest / "manifest.txt", config, extractor.is_empty() ? nullptr : extractor.get(),
                         started_from, latest.string());
      state.last_checkpoint = latest.string();
      prune_checkpoints(run_dir, std::max(options.keep_checkpoints, 1));
    }
    if (pause) break;
  }
  if (latest.empty()) throw CheckpointError("run finished without writing a checkpoint");
  write_run_manifest(manifest_path, config, extractor.is_empty() ? nullptr : extractor.get(), started_from,
                     latest.string());
  return latest;
}

}  // namespace cyclehair
