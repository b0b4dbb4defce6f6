#pragma once

// Model files: {"p": n, "sigma": [[...], ...], "meta": {...}} with every
// Sigma entry written with 17 significant digits.
// Dataset files: '#' comment lines, header "x1,...,xp", rows of 0/1.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grassbin/matrix.hpp"
#include "grassbin/sampler.hpp"

namespace grassbin::io {

std::string format_double(double v);

struct ModelFile {
  Matrix sigma;
  nlohmann::json meta = nlohmann::json::object();
};

std::string serialize_model(const ModelFile& model);
ModelFile parse_model(const std::string& text);
ModelFile load_model(const std::filesystem::path& path);
void save_model(const std::filesystem::path& path, const ModelFile& model);

// FNV-1a over the serialized Sigma rows, as 16 hex digits.
std::string model_hash(const Matrix& sigma);

void write_dataset(std::ostream& out, const Dataset& data, const std::vector<std::string>& comments);
Dataset read_dataset(std::istream& in);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace grassbin::io
