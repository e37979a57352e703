#pragma once
// Text checkpoint container, format version 1:
//
//   kbc-checkpoint 1
//   meta <key>\t<value>                 (zero or more)
//   vocab <name> <count>                (zero or more, followed by <count>
//   <symbol>                             lines, one symbol each)
//   tensor <name> <rows> <cols>         (zero or more, followed by <rows>
//   <v_0> <v_1> ... <v_cols-1>           lines of %.17g values)
//   end
//
// Sections appear in the order above; names contain no whitespace. Values are
// written with round-trip precision, so save/load is exact.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "kbc/nn/tensor.hpp"

namespace kbc::nn {

struct Checkpoint {
  static constexpr int kVersion = 1;

  std::map<std::string, std::string> meta;
  std::map<std::string, std::vector<std::string>> vocabs;
  std::vector<std::pair<std::string, Matrix>> tensors;

  void add_parameters(const ParameterStore& params);
  // Copies every tensor into the same-named parameter; shapes must match.
  void restore_parameters(ParameterStore& params) const;
  const std::string& require_meta(const std::string& key) const;

  void save(std::ostream& out) const;
  void save(const std::filesystem::path& file) const;
  static Checkpoint load(std::istream& in);
  static Checkpoint load(const std::filesystem::path& file);
};

}  // namespace kbc::nn
