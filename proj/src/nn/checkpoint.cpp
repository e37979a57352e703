#include "kbc/nn/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "kbc/text_util.hpp"

namespace kbc::nn {

void Checkpoint::add_parameters(const ParameterStore& params) {
  for (const auto& p : params.all()) tensors.emplace_back(p.name, p.value);
}

void Checkpoint::restore_parameters(ParameterStore& params) const {
  for (const auto& [name, value] : tensors) {
    Parameter* p = params.find(name);
    if (!p) throw Error("checkpoint tensor '" + name + "' has no matching parameter");
    if (p->value.rows() != value.rows() || p->value.cols() != value.cols()) {
      throw ShapeError("checkpoint tensor '" + name + "' shape differs from model");
    }
    p->value = value;
  }
  for (const auto& p : params.all()) {
    bool found = false;
    for (const auto& t : tensors) found = found || t.first == p.name;
    if (!found) throw Error("checkpoint lacks parameter '" + p.name + "'");
  }
}

const std::string& Checkpoint::require_meta(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw Error("checkpoint missing meta key '" + key + "'");
  return it->second;
}

void Checkpoint::save(std::ostream& out) const {
  out << "kbc-checkpoint " << kVersion << '\n';
  for (const auto& [k, v] : meta) out << "meta " << k << '\t' << v << '\n';
  for (const auto& [name, symbols] : vocabs) {
    out << "vocab " << name << ' ' << symbols.size() << '\n';
    for (const auto& s : symbols) out << s << '\n';
  }
  char buf[40];
  for (const auto& [name, m] : tensors) {
    out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%s%.17g", c ? " " : "", m(r, c));
        out << buf;
      }
      out << '\n';
    }
  }
  out << "end\n";
}

void Checkpoint::save(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw Error("cannot write checkpoint " + file.string());
  save(out);
}

Checkpoint Checkpoint::load(std::istream& in) {
  Checkpoint ck;
  std::string line;
  auto next = [&](const char* what) {
    if (!std::getline(in, line)) throw Error(std::string("checkpoint truncated reading ") + what);
    strip_cr(line);
  };
  next("header");
  auto header = split_ws(line);
  if (header.size() != 2 || header[0] != "kbc-checkpoint") throw Error("not a kbc checkpoint");
  if (std::stoi(header[1]) != kVersion) throw Error("unsupported checkpoint version " + header[1]);
  while (true) {
    next("section");
    if (line == "end") break;
    if (line.rfind("meta ", 0) == 0) {
      auto tab = line.find('\t');
      if (tab == std::string::npos) throw Error("malformed checkpoint meta line");
      ck.meta[line.substr(5, tab - 5)] = line.substr(tab + 1);
    } else if (line.rfind("vocab ", 0) == 0) {
      auto f = split_ws(line);
      if (f.size() != 3) throw Error("malformed checkpoint vocab line");
      auto& symbols = ck.vocabs[f[1]];
      const std::size_t count = std::stoul(f[2]);
      for (std::size_t i = 0; i < count; ++i) {
        next("vocab symbol");
        symbols.push_back(line);
      }
    } else if (line.rfind("tensor ", 0) == 0) {
      auto f = split_ws(line);
      if (f.size() != 4) throw Error("malformed checkpoint tensor line");
      Matrix m(std::stol(f[2]), std::stol(f[3]));
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        next("tensor row");
        std::istringstream row(line);
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
          std::string v;
          if (!(row >> v)) throw Error("checkpoint tensor '" + f[1] + "' row too short");
          m(r, c) = std::stod(v);
        }
      }
      ck.tensors.emplace_back(f[1], std::move(m));
    } else {
      throw Error("unknown checkpoint section: " + line);
    }
  }
  return ck;
}

Checkpoint Checkpoint::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open checkpoint " + file.string());
  return load(in);
}

}  // namespace kbc::nn
