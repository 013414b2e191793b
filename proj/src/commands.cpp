#include "cyclehair/commands.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "cyclehair/errors.hpp"
#include "cyclehair/random.hpp"
#include "cyclehair/tensor_io.hpp"
#include "cyclehair/trainer.hpp"

namespace cyclehair {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) { write_file_atomically(path, text); }

corpus::Image tensor_to_image(const torch::Tensor& chw) {
  const auto t = chw.detach().to(torch::kFloat32).contiguous();
  corpus::Image image;
  image.channels = static_cast<int>(t.size(0));
  image.height = static_cast<int>(t.size(1));
  image.width = static_cast<int>(t.size(2));
  image.data.assign(t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
  return image;
}

struct Column {
  std::string label;
  ConditionVector condition;
};

std::vector<Column> grid_columns(const InferenceModel& model, const std::vector<std::string>& conditions) {
  if (model.vocabulary.empty()) {
    if (!conditions.empty()) throw ConditionError("checkpoint is unconditional and takes no conditions");
    return {{"Unconditional", {}}};
  }
  if (conditions.empty()) {
    throw ConditionError("checkpoint is conditional (mode " + to_string(model.config.condition_mode) +
                         "); give at least one condition");
  }
  std::vector<Column> columns;
  for (const auto& text : conditions) {
    auto condition = parse_condition(text, model.vocabulary);
    columns.push_back({condition_label(condition, model.vocabulary), std::move(condition)});
  }
  return columns;
}

}  // namespace

std::vector<std::string> hairy_classes_for(ConditionMode mode) {
  const auto mode_for_classes = mode == ConditionMode::None ? ConditionMode::Six : mode;
  return ConditionVocabulary::for_mode(mode_for_classes).classes;
}

std::string format_prepare_report(const PrepareResult& result, const std::vector<std::string>& classes) {
  std::ostringstream out;
  out << "domain X bald: available=" << result.available_x << " train=" << result.x.train.records.size()
      << " test=" << result.x.test.records.size() << '\n';
  out << "domain Y hairy: available=" << result.available_y << " train=" << result.y.train.records.size()
      << " test=" << result.y.test.records.size() << '\n';
  out << "histogram records=" << result.available_y << " classes=" << classes.size() << '\n';
  for (const auto& [name, count] : result.histogram) out << name << ' ' << count << '\n';
  return out.str();
}

PrepareResult cmd_prepare(const PrepareOptions& options) {
  const auto manifest = corpus::read_attribute_file(options.manifest_path);
  const auto classes = hairy_classes_for(options.mode);
  const auto bald = corpus::filter_domain(manifest, corpus::bald_predicate());
  const auto hairy = corpus::filter_domain(manifest, corpus::hairy_predicate(classes));

  PrepareResult result;
  result.available_x = bald.records.size();
  result.available_y = hairy.records.size();
  result.histogram = corpus::class_histogram(hairy, classes);
  try {
    result.x = corpus::split(bald, {options.n_train, options.n_test, derive_seed(options.seed, 1)});
  } catch (const InsufficientRecords& e) {
    throw InsufficientRecords(std::string("bald domain: ") + e.what());
  }
  try {
    result.y = corpus::split(hairy, {options.n_train, options.n_test, derive_seed(options.seed, 2)});
  } catch (const InsufficientRecords& e) {
    throw InsufficientRecords(std::string("hairy domain: ") + e.what());
  }

  fs::create_directories(options.out_dir);
  corpus::write_filename_list(options.out_dir / "trainX.txt", result.x.train);
  corpus::write_filename_list(options.out_dir / "testX.txt", result.x.test);
  corpus::write_filename_list(options.out_dir / "trainY.txt", result.y.train);
  corpus::write_filename_list(options.out_dir / "testY.txt", result.y.test);

  // Selected records only, in manifest order.
  std::vector<std::string> chosen;
  for (const auto* part : {&result.x.train, &result.x.test, &result.y.train, &result.y.test}) {
    for (const auto& r : part->records) chosen.push_back(r.filename);
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<corpus::AttributeRecord> selected;
  for (const auto& r : manifest.records) {
    if (std::binary_search(chosen.begin(), chosen.end(), r.filename)) selected.push_back(r);
  }
  corpus::write_attribute_file(options.out_dir / "attributes.txt", manifest.with_records(std::move(selected)));
  write_text(options.out_dir / "image_root.txt", fs::absolute(options.image_root).lexically_normal().string() + "\n");
  write_text(options.out_dir / "report.txt", format_prepare_report(result, classes));
  return result;
}

ExperimentConfig resolve_train_config(const TrainCommand& command) {
  if (command.config_path.has_value() == command.preset.has_value()) {
    throw ConfigError("give exactly one of --config and --preset");
  }
  ExperimentConfig config =
      command.config_path ? read_config_file(*command.config_path) : preset_by_name(*command.preset);
  if (command.seed) config.seed = *command.seed;
  if (const auto violations = validate(config); !violations.empty()) {
    std::string message = "invalid config '" + config.name + "':";
    for (const auto& v : violations) message += "\n  " + v;
    throw ConfigError(message);
  }
  return config;
}

fs::path cmd_train(const TrainCommand& command) {
  const auto config = resolve_train_config(command);
  const auto data = load_training_data(command.data_dir, config);
  RunOptions options;
  options.out_dir = command.out_dir;
  if (command.resume) options.resume_from = resolve_checkpoint(*command.resume);
  options.stop_after_epoch = command.stop_after_epoch;
  options.extractor_weights = command.extractor_weights;
  options.on_step = command.on_step;
  return run(config, data, options);
}

Direction parse_direction(std::string_view text) {
  if (text == "forward") return Direction::Forward;
  if (text == "reverse") return Direction::Reverse;
  throw ConfigError("direction must be 'forward' or 'reverse', got '" + std::string(text) + "'");
}

InferenceModel InferenceModel::load(const fs::path& path, Direction direction) {
  InferenceModel model;
  model.checkpoint = resolve_checkpoint(path);
  try {
    model.config = read_config_file(model.checkpoint / "config.snapshot");
  } catch (const ConfigError& e) {
    throw CheckpointError(e.what());
  }
  model.vocabulary = ConditionVocabulary::for_mode(model.config.condition_mode);
  const auto spec = generator_spec_for(model.config);
  model.generator = build_generator(spec, 0);
  const auto file = read_param_file(model.checkpoint / (direction == Direction::Forward ? "G.bin" : "F.bin"));
  if (file.spec != spec.describe()) {
    throw CheckpointError("generator file describes '" + file.spec + "' but the config needs '" + spec.describe() + "'");
  }
  load_module(*model.generator, file);
  model.generator->eval();
  model.embedding = ConditionEmbedding(static_cast<std::int64_t>(model.vocabulary.size()),
                                       embedding_width(model.config.condition_mode, model.config.embedding_dim));
  load_module(*model.embedding, read_param_file(model.checkpoint / "embedding.bin"));
  return model;
}

ConditionVector InferenceModel::resolve_condition(const std::optional<std::string>& text) const {
  if (!text) {
    if (!vocabulary.empty()) {
      throw ConditionError("checkpoint is conditional (mode " + to_string(config.condition_mode) +
                           "); pass a condition such as 'black,straight'");
    }
    return {};
  }
  if (vocabulary.empty()) throw ConditionError("checkpoint is unconditional; conditions are not accepted");
  return parse_condition(*text, vocabulary);
}

torch::Tensor InferenceModel::translate(const torch::Tensor& batch, const ConditionVector& condition) const {
  if (batch.dim() != 4 || batch.size(2) != config.image_size || batch.size(3) != config.image_size) {
    throw ShapeError("checkpoint translates " + std::to_string(config.image_size) + " px images");
  }
  torch::NoGradGuard no_grad;
  const std::vector<ConditionVector> conditions(static_cast<std::size_t>(batch.size(0)), condition);
  const auto planes = embed_broadcast(conditions, embedding->table, batch.size(2), batch.size(3));
  return forward_generator(*generator, inject(batch, planes));
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError(dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

InferResult cmd_infer(const InferCommand& command) {
  const auto model = InferenceModel::load(command.checkpoint, command.direction);
  const auto condition = model.resolve_condition(command.condition);
  const auto inputs = list_images(command.input_dir);
  fs::create_directories(command.out_dir);
  InferResult result;
  for (const auto& path : inputs) {
    corpus::Image image;
    try {
      image = corpus::load_image(path, model.config.image_size);
    } catch (const ImageDecodeError& e) {
      result.failures.emplace_back(path, e.what());
      continue;
    }
    const auto output = model.translate(to_batch({image}), condition);
    const auto target = command.out_dir / (path.stem().string() + "_fake.png");
    write_png(target, to_rgb(tensor_to_image(output[0])));
    result.written.push_back(target);
  }
  return result;
}

GridResult cmd_grid(const GridCommand& command) {
  const auto model = InferenceModel::load(command.checkpoint, command.direction);
  const auto columns = grid_columns(model, command.conditions);

  GridResult result;
  std::vector<corpus::Image> inputs;
  for (const auto& path : list_images(command.input_dir)) {
    if (command.max_rows && inputs.size() >= *command.max_rows) break;
    try {
      inputs.push_back(corpus::load_image(path, model.config.image_size));
    } catch (const ImageDecodeError& e) {
      result.failures.emplace_back(path, e.what());
    }
  }
  if (inputs.empty()) throw ImageDecodeError("no decodable images in " + command.input_dir.string());

  std::vector<std::string> labels;
  for (const auto& c : columns) labels.push_back(c.label);
  result.layout = make_grid_layout(inputs.size(), labels, model.config.image_size);

  std::vector<std::vector<std::pair<RgbImage, RgbImage>>> cells(inputs.size());
  for (std::size_t row = 0; row < inputs.size(); ++row) {
    const auto batch = to_batch({inputs[row]});
    const auto input_rgb = to_rgb(inputs[row]);
    for (const auto& column : columns) {
      cells[row].emplace_back(input_rgb, to_rgb(tensor_to_image(model.translate(batch, column.condition)[0])));
    }
  }
  write_png(command.out_path, compose_grid(result.layout, cells));
  return result;
}

corpus::AttributeManifest cmd_synth(const SynthCommand& command) {
  return write_synthetic_dataset(command.out_dir, command.options);
}

}  // namespace cyclehair
