#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "decssl/fedsim.hpp"
#include "decssl/types.hpp"

namespace decssl {

/// Dataset CSV layout: one row per sample, "label,v0,...,v{d-1}", full
/// double precision, no header.
void save_dataset_csv(const std::filesystem::path& path, const LocalDataset& dataset);
LocalDataset load_dataset_csv(const std::filesystem::path& path, int source_id = 0);

/// Plain numeric matrix CSV, one row per matrix row.
void save_matrix_csv(const std::filesystem::path& path, const Matrix& m);
Matrix load_matrix_csv(const std::filesystem::path& path);

/// Model checkpoint: weight matrix CSV plus an optional "<stem>_predictor.csv".
void save_encoder(const std::filesystem::path& weight_path, const LinearEncoder& encoder);
LinearEncoder load_encoder(const std::filesystem::path& weight_path);

nlohmann::json partition_to_json(const PartitionSpec& spec);
PartitionSpec partition_from_json(const nlohmann::json& j);
void save_partition_json(const std::filesystem::path& path, const PartitionSpec& spec);
PartitionSpec load_partition_json(const std::filesystem::path& path);

nlohmann::json round_record_to_json(const RoundRecord& rec);

/// Trace as JSON-lines, one round record per line; every line carries the
/// master seed so artifacts stay traceable on their own.
void save_trace_jsonl(const std::filesystem::path& path, const TrainingTrace& trace,
                      std::uint64_t master_seed);

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace decssl
