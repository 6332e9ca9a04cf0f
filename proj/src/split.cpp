#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "tsfm/errors.hpp"
#include "tsfm/random.hpp"
#include "tsfm/workbench.hpp"

namespace tsfm::workbench {

namespace {

constexpr const char* kTags[3] = {"train", "val", "test"};

SplitIndices indices_for(const Dataset& ds, const std::map<std::string, int>& assignment) {
  SplitIndices out;
  std::vector<std::size_t>* dst[3] = {&out.train, &out.val, &out.test};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto it = assignment.find(ds.subject_ids[i]);
    if (it != assignment.end()) dst[it->second]->push_back(i);
  }
  return out;
}

}  // namespace

SplitIndices split_by_subject(const Dataset& ds, double train_frac, double val_frac, double test_frac, std::uint64_t seed) {
  const double fr[3] = {train_frac, val_frac, test_frac};
  for (double f : fr)
    if (!(f >= 0.0)) throw ConfigError("split fractions must be non-negative");
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  auto subjects = ds.subjects();
  const std::size_t n = subjects.size();
  if (n < 3) throw DataError("subject-wise splitting needs at least 3 subjects, found " + std::to_string(n));

  Rng rng(derive_seed(seed, {0x73706c6974ULL}));
  for (std::size_t i = n; i > 1; --i) std::swap(subjects[i - 1], subjects[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);

  std::size_t count[3];
  std::size_t used = 0;
  for (int k = 0; k < 3; ++k) {
    count[k] = static_cast<std::size_t>(std::floor(fr[k] * static_cast<double>(n) + 1e-9));
    used += count[k];
  }
  std::size_t left = n - used;
  // Splits that rounded down to nothing are served first, then round-robin
  // from train.
  for (int k = 0; k < 3 && left > 0; ++k)
    if (count[k] == 0 && fr[k] > 0.0) {
      ++count[k];
      --left;
    }
  for (int k = 0; left > 0; k = (k + 1) % 3)
    if (fr[k] > 0.0) {
      ++count[k];
      --left;
    }

  std::map<std::string, int> assignment;
  std::size_t pos = 0;
  for (int k = 0; k < 3; ++k)
    for (std::size_t m = 0; m < count[k]; ++m) assignment[subjects[pos++]] = k;
  return indices_for(ds, assignment);
}

long subject_number(const std::string& id) {
  std::size_t end = id.size(), begin = end;
  while (begin > 0 && std::isdigit(static_cast<unsigned char>(id[begin - 1]))) --begin;
  if (begin == end) throw DataError("subject id '" + id + "' has no numeric part");
  return std::stol(id.substr(begin));
}

std::vector<SubjectRange> parse_ranges(const std::string& text) {
  std::vector<SubjectRange> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto dash = part.find('-', 1);
    try {
      if (dash == std::string::npos) {
        const long v = std::stol(part);
        out.push_back({v, v});
      } else {
        out.push_back({std::stol(part.substr(0, dash)), std::stol(part.substr(dash + 1))});
      }
    } catch (const std::exception&) {
      throw ConfigError("cannot parse subject range '" + part + "'");
    }
    if (out.back().last < out.back().first) throw ConfigError("subject range '" + part + "' is reversed");
  }
  return out;
}

SplitIndices split_by_subject_ranges(const Dataset& ds, SubjectRange train, SubjectRange val, SubjectRange test) {
  const SubjectRange r[3] = {train, val, test};
  for (int a = 0; a < 3; ++a) {
    if (r[a].last < r[a].first) throw DataError(std::string(kTags[a]) + " subject range is reversed");
    for (int b = a + 1; b < 3; ++b)
      if (r[a].first <= r[b].last && r[b].first <= r[a].last) {
        throw DataError(std::string(kTags[a]) + " and " + kTags[b] + " subject ranges overlap");
      }
  }
  std::map<long, std::string> by_number;
  for (const auto& s : ds.subjects()) {
    auto [it, fresh] = by_number.emplace(subject_number(s), s);
    if (!fresh) throw DataError("subjects '" + it->second + "' and '" + s + "' share the number " + std::to_string(it->first));
  }
  std::map<std::string, int> assignment;
  for (int k = 0; k < 3; ++k)
    for (long v = r[k].first; v <= r[k].last; ++v) {
      auto it = by_number.find(v);
      if (it == by_number.end()) throw DataError(std::string(kTags[k]) + " range references missing subject " + std::to_string(v));
      assignment[it->second] = k;
    }
  return indices_for(ds, assignment);
}

void apply_split_tags(Dataset& ds, const SplitIndices& split) {
  ds.split_tags.assign(ds.size(), "none");
  const std::vector<std::size_t>* src[3] = {&split.train, &split.val, &split.test};
  for (int k = 0; k < 3; ++k)
    for (auto i : *src[k]) {
      if (i >= ds.size()) throw DataError("split index out of range");
      ds.split_tags[i] = kTags[k];
    }
}

void check_split_leakage(const Dataset& ds) {
  if (ds.split_tags.size() != ds.size()) throw DataError("dataset carries no split tags for every sample");
  std::map<std::string, std::string> owner;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& tag = ds.split_tags[i];
    if (tag == "none") continue;
    if (tag != "train" && tag != "val" && tag != "test") throw DataError("unknown split tag '" + tag + "'");
    auto [it, fresh] = owner.emplace(ds.subject_ids[i], tag);
    if (!fresh && it->second != tag) {
      throw DataError("subject '" + ds.subject_ids[i] + "' leaks across the " + it->second + " and " + tag + " splits");
    }
  }
}

SplitIndices split_from_tags(const Dataset& ds) {
  check_split_leakage(ds);
  SplitIndices out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& tag = ds.split_tags[i];
    if (tag == "train") out.train.push_back(i);
    if (tag == "val") out.val.push_back(i);
    if (tag == "test") out.test.push_back(i);
  }
  return out;
}

}  // namespace tsfm::workbench
