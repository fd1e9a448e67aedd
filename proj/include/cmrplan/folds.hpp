#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cmrplan {

struct FoldSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Patient-grouped k-fold: distinct groups are shuffled by seed and dealt into
// k near-equal folds; every item follows its group. Indices are ascending.
std::vector<FoldSplit> grouped_kfold(std::span<const std::string> groups, std::size_t k, std::uint64_t seed);

} // namespace cmrplan
