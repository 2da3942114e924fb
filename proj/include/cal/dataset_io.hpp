#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "cal/graph.hpp"

namespace cal {

inline constexpr std::string_view kDatasetMagic = "CALDATA";
inline constexpr int kDatasetVersion = 1;

/// Text dataset format, UTF-8, one record per line.
///
/// Line 1:  CALDATA 1 graphs=<N> classes=<K> features=<F>
/// Then one tab-separated line per graph with the fields, in this order:
///   n=<nodes> y=<label> split=<train|val|test> causal=<kind|-> trivial=<kind|->
///   causal_nodes=<i,j,...|-> base_edges=<count> edges=<a-b,c-d,...> features=<hot column per node, comma-separated>
void write_dataset(std::ostream& out, const Dataset& dataset);
Dataset read_dataset(std::istream& in);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Reads a TUDataset directory (DS_A.txt, DS_graph_indicator.txt,
/// DS_graph_labels.txt, optional DS_node_labels.txt; 1-indexed node ids).
/// Node labels become one-hot features; without them, features are one-hot
/// degrees capped at `degree_feature_dim - 1`. Graph labels are remapped to
/// [0, num_classes) in ascending order. Every graph is assigned to Train.
Dataset load_tudataset(const std::filesystem::path& directory, std::size_t degree_feature_dim = 20);

}  // namespace cal
