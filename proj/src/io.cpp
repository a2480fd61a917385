#include "decssl/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace decssl {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}

double parse_double(const std::string& s, const std::filesystem::path& path) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("malformed number '" + s + "' in " + path.string());
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  return in;
}

}  // namespace

void save_dataset_csv(const std::filesystem::path& path, const LocalDataset& dataset) {
  auto out = open_out(path);
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    out << dataset.labels[static_cast<std::size_t>(i)];
    for (Eigen::Index r = 0; r < dataset.dim(); ++r)
      out << ',' << format_double(dataset.samples(r, i));
    out << '\n';
  }
}

LocalDataset load_dataset_csv(const std::filesystem::path& path, int source_id) {
  auto in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() < 2) throw std::runtime_error("dataset row too short in " + path.string());
    labels.push_back(static_cast<int>(parse_double(fields[0], path)));
    std::vector<double> vals;
    vals.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) vals.push_back(parse_double(fields[i], path));
    if (!rows.empty() && vals.size() != rows.front().size())
      throw std::runtime_error("inconsistent dataset row width in " + path.string());
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw std::runtime_error("empty dataset file: " + path.string());
  LocalDataset ds;
  ds.source_id = source_id;
  ds.labels = std::move(labels);
  ds.samples.resize(static_cast<Eigen::Index>(rows.front().size()),
                    static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t r = 0; r < rows[i].size(); ++r)
      ds.samples(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = rows[i][r];
  return ds;
}

void save_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  auto out = open_out(path);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

Matrix load_matrix_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    std::vector<double> vals;
    vals.reserve(fields.size());
    for (const auto& f : fields) vals.push_back(parse_double(f, path));
    if (!rows.empty() && vals.size() != rows.front().size())
      throw std::runtime_error("inconsistent matrix row width in " + path.string());
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw std::runtime_error("empty matrix file: " + path.string());
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

namespace {

std::filesystem::path predictor_path(const std::filesystem::path& weight_path) {
  std::filesystem::path p = weight_path;
  p.replace_filename(weight_path.stem().string() + "_predictor" +
                     weight_path.extension().string());
  return p;
}

}  // namespace

void save_encoder(const std::filesystem::path& weight_path, const LinearEncoder& encoder) {
  save_matrix_csv(weight_path, encoder.weight);
  if (encoder.predictor) save_matrix_csv(predictor_path(weight_path), *encoder.predictor);
}

LinearEncoder load_encoder(const std::filesystem::path& weight_path) {
  LinearEncoder enc;
  enc.weight = load_matrix_csv(weight_path);
  const auto pp = predictor_path(weight_path);
  if (std::filesystem::exists(pp)) enc.predictor = load_matrix_csv(pp);
  return enc;
}

nlohmann::json partition_to_json(const PartitionSpec& spec) {
  nlohmann::json j;
  j["scheme"] = to_string(spec.scheme);
  j["parameter"] = spec.parameter;
  j["assignments"] = spec.assignments;
  return j;
}

PartitionSpec partition_from_json(const nlohmann::json& j) {
  PartitionSpec spec;
  spec.scheme = partition_scheme_from_string(j.at("scheme").get<std::string>());
  spec.parameter = j.at("parameter").get<double>();
  spec.assignments = j.at("assignments").get<std::vector<std::vector<std::size_t>>>();
  return spec;
}

void save_partition_json(const std::filesystem::path& path, const PartitionSpec& spec) {
  auto out = open_out(path);
  out << partition_to_json(spec).dump(2) << '\n';
}

PartitionSpec load_partition_json(const std::filesystem::path& path) {
  auto in = open_in(path);
  nlohmann::json j;
  in >> j;
  return partition_from_json(j);
}

namespace {

nlohmann::json number_or_null(double v) {
  if (std::isnan(v) || std::isinf(v)) return nullptr;
  return v;
}

}  // namespace

nlohmann::json round_record_to_json(const RoundRecord& rec) {
  nlohmann::json j;
  j["round"] = rec.round;
  j["mean_local_loss"] = number_or_null(rec.mean_local_loss);
  j["global_loss"] = number_or_null(rec.global_loss);
  j["principal_angle_to_oracle"] = number_or_null(rec.principal_angle_to_oracle);
  j["wall_time_ms"] = rec.wall_time_ms;
  if (!std::isnan(rec.consensus_mean_distance)) {
    j["consensus_mean_distance"] = rec.consensus_mean_distance;
    j["consensus_max_distance"] = rec.consensus_max_distance;
  }
  if (!rec.node_losses.empty()) j["node_losses"] = rec.node_losses;
  if (!rec.node_angles.empty()) j["node_angles"] = rec.node_angles;
  if (!rec.assignments.empty()) j["assignments"] = rec.assignments;
  if (!rec.cluster_sizes.empty()) j["cluster_sizes"] = rec.cluster_sizes;
  if (!rec.mean_alignment.empty()) {
    nlohmann::json arr = nlohmann::json::array();
    for (double v : rec.mean_alignment) arr.push_back(number_or_null(v));
    j["mean_alignment"] = arr;
  }
  return j;
}

void save_trace_jsonl(const std::filesystem::path& path, const TrainingTrace& trace,
                      std::uint64_t master_seed) {
  auto out = open_out(path);
  for (const auto& rec : trace.rounds) {
    nlohmann::json j = round_record_to_json(rec);
    j["master_seed"] = master_seed;
    out << j.dump() << '\n';
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  auto out = open_out(path);
  out << content;
}

std::string read_text_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace decssl
