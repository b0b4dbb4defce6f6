#include "grassbin/io.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "grassbin/error.hpp"

namespace grassbin::io {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {
std::string sigma_rows(const Matrix& sigma, const char* indent) {
  std::string out;
  for (std::size_t i = 0; i < sigma.rows(); ++i) {
    out += indent;
    out += "[";
    for (std::size_t j = 0; j < sigma.cols(); ++j) {
      if (j) out += ", ";
      out += format_double(sigma(i, j));
    }
    out += "]";
    if (i + 1 < sigma.rows()) out += ",";
    out += "\n";
  }
  return out;
}

[[noreturn]] void parse_fail(const std::string& what) { throw Error(Errc::ParseError, what); }
}  // namespace

std::string serialize_model(const ModelFile& model) {
  std::string out = "{\n  \"p\": " + std::to_string(model.sigma.rows()) + ",\n  \"sigma\": [\n";
  out += sigma_rows(model.sigma, "    ");
  out += "  ]";
  if (!model.meta.is_null() && !model.meta.empty()) out += ",\n  \"meta\": " + model.meta.dump();
  out += "\n}\n";
  return out;
}

ModelFile parse_model(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    parse_fail(std::string("model file is not valid JSON (") + e.what() + ")");
  }
  if (!doc.is_object()) parse_fail("model file must be a JSON object");
  if (!doc.contains("p") || !doc["p"].is_number_unsigned()) {
    parse_fail("field 'p': expected a non-negative integer");
  }
  const auto p = doc["p"].get<std::size_t>();
  if (!doc.contains("sigma") || !doc["sigma"].is_array()) {
    parse_fail("field 'sigma': expected an array of rows");
  }
  const auto& rows = doc["sigma"];
  if (rows.size() != p) {
    parse_fail("field 'sigma': " + std::to_string(rows.size()) + " rows, p = " + std::to_string(p));
  }
  ModelFile model{Matrix(p, p)};
  for (std::size_t i = 0; i < p; ++i) {
    const auto& row = rows[i];
    if (!row.is_array() || row.size() != p) {
      parse_fail("field 'sigma', row " + std::to_string(i + 1) + ": expected " +
                 std::to_string(p) + " numbers");
    }
    for (std::size_t j = 0; j < p; ++j) {
      if (!row[j].is_number()) {
        parse_fail("field 'sigma', row " + std::to_string(i + 1) + ", column " +
                   std::to_string(j + 1) + ": not a number");
      }
      model.sigma(i, j) = row[j].get<double>();
    }
  }
  if (doc.contains("meta")) model.meta = doc["meta"];
  return model;
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ParseError, "cannot open model file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_model(ss.str());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void save_model(const std::filesystem::path& path, const ModelFile& model) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::ParseError, "cannot write model file " + path.string());
  out << serialize_model(model);
}

std::string model_hash(const Matrix& sigma) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : sigma_rows(sigma, "")) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_dataset(std::ostream& out, const Dataset& data, const std::vector<std::string>& comments) {
  for (const auto& c : comments) out << "# " << c << "\n";
  for (std::size_t i = 0; i < data.dim(); ++i) out << (i ? "," : "") << "x" << (i + 1);
  out << "\n";
  std::string line;
  for (State s : data.rows()) {
    line.clear();
    for (std::size_t i = 0; i < data.dim(); ++i) {
      if (i) line += ',';
      line += ((s >> i) & 1u) ? '1' : '0';
    }
    out << line << "\n";
  }
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::size_t p = 0;
  bool have_header = false;
  Dataset data(0);
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (!have_header) {
      p = fields.size();
      for (std::size_t i = 0; i < p; ++i) {
        if (fields[i] != "x" + std::to_string(i + 1)) {
          parse_fail("line " + std::to_string(line_no) + ", field " + std::to_string(i + 1) +
                     ": expected header 'x" + std::to_string(i + 1) + "', got '" + fields[i] + "'");
        }
      }
      if (p == 0 || p > 62) parse_fail("line " + std::to_string(line_no) + ": unsupported column count");
      data = Dataset(p);
      have_header = true;
      continue;
    }
    if (fields.size() != p) {
      parse_fail("line " + std::to_string(line_no) + ": " + std::to_string(fields.size()) +
                 " fields, expected " + std::to_string(p));
    }
    State s = 0;
    for (std::size_t i = 0; i < p; ++i) {
      if (fields[i] == "1") {
        s |= State{1} << i;
      } else if (fields[i] != "0") {
        parse_fail("line " + std::to_string(line_no) + ", field " + std::to_string(i + 1) +
                   ": expected 0 or 1, got '" + fields[i] + "'");
      }
    }
    data.add(s);
  }
  if (!have_header) parse_fail("dataset has no header line");
  return data;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ParseError, "cannot open dataset " + path.string());
  try {
    return read_dataset(in);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace grassbin::io
