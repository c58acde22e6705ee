#pragma once

#include <filesystem>
#include <vector>

#include "joinml/core.hpp"
#include "joinml/synth.hpp"

namespace joinml::io {

/// CSV with header `id,entity,value[,extra...]`; an empty entity cell means none.
Table read_table_csv(const std::filesystem::path& path, const std::string& name);
void write_table_csv(const std::filesystem::path& path, const Table& table);

/// Little-endian float32 payload with a `<file>.meta` line `dim=<d> count=<n>`.
void read_embeddings(const std::filesystem::path& path, Table& table);
void write_embeddings(const std::filesystem::path& path, const Table& table);

/// Little-endian float32 matrix with a `<file>.meta` line `rows=<r> cols=<c>`.
std::vector<float> read_score_matrix(const std::filesystem::path& path, std::size_t& rows, std::size_t& cols);
void write_score_matrix(const std::filesystem::path& path, const std::vector<float>& scores, std::size_t rows,
                        std::size_t cols);

void write_syn_dataset(const std::filesystem::path& dir, const SynDataset& data);

/// Reads a dataset directory described by manifest.json.
///   kind "syn":       tables/left.csv, tables/right.csv, scores.bin, labels.csv
///   kind "embedding": tables/<name>.csv + tables/<name>.emb for every table in "tables";
///                     entity-equality Oracle
Dataset load_dataset(const std::filesystem::path& dir);

/// Space options recorded in the manifest: value_table, group_column, exclude_self_pairs.
SpaceOptions space_options(const Dataset& dataset);

nlohmann::json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace joinml::io
