#include "cmrplan/folds.hpp"

#include <algorithm>
#include <map>

#include "cmrplan/error.hpp"
#include "cmrplan/rng.hpp"

namespace cmrplan {

std::vector<FoldSplit> grouped_kfold(std::span<const std::string> groups, std::size_t k, std::uint64_t seed)
{
    if (k < 2) throw ParameterError("k must be at least 2");
    std::vector<std::string> ids(groups.begin(), groups.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.size() < k) throw PreconditionError("fewer distinct patients than folds");

    // Fisher-Yates with our own draws so the split does not depend on the
    // standard library's shuffle implementation.
    Rng rng(derive_seed(seed, 0x666f6c6473ULL));
    for (std::size_t i = ids.size() - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng() % (i + 1));
        std::swap(ids[i], ids[j]);
    }
    std::map<std::string, std::size_t> fold_of;
    for (std::size_t p = 0; p < ids.size(); ++p) fold_of[ids[p]] = p % k;

    std::vector<FoldSplit> out(k);
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const std::size_t f = fold_of.at(groups[i]);
        for (std::size_t g = 0; g < k; ++g) (g == f ? out[g].test : out[g].train).push_back(i);
    }
    return out;
}

} // namespace cmrplan
