#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "common.hpp"
#include "data.hpp"
#include "topology.hpp"

namespace poisonlab {

enum class AttackKind { none, label_flip, custom_map };

inline std::string_view to_string(AttackKind k) {
    switch (k) {
    case AttackKind::none: return "none";
    case AttackKind::label_flip: return "label_flip";
    case AttackKind::custom_map: return "custom_map";
    }
    return "?";
}

inline AttackKind parse_attack_kind(std::string_view name) {
    if (name == "none")
        return AttackKind::none;
    if (name == "label_flip")
        return AttackKind::label_flip;
    if (name == "custom_map")
        return AttackKind::custom_map;
    throw InvalidArgument("unknown attack '" + std::string(name) + "'");
}

/// Relabeling applied to the local data of poisoned agents.
///
/// label_flip maps b to B-1-b. With `off_by_one` it maps b to (B-b) mod B,
/// which fixes 0 and otherwise reflects around B/2.
struct AttackSpec {
    AttackKind kind = AttackKind::label_flip;
    int num_classes = 10;
    bool off_by_one = false;
    std::vector<int> map; ///< custom_map: map[b] is the new label

    [[nodiscard]] int apply(int b) const {
        if (b < 0 || b >= num_classes)
            throw InvalidArgument("attack: label " + std::to_string(b) + " outside [0," + std::to_string(num_classes) + ")");
        switch (kind) {
        case AttackKind::none: return b;
        case AttackKind::label_flip: return off_by_one ? (num_classes - b) % num_classes : num_classes - 1 - b;
        case AttackKind::custom_map: {
            if (map.size() != static_cast<std::size_t>(num_classes))
                throw InvalidArgument("attack: custom map must have one entry per class");
            auto const out = map[static_cast<std::size_t>(b)];
            if (out < 0 || out >= num_classes)
                throw InvalidArgument("attack: custom map sends " + std::to_string(b) + " out of range");
            return out;
        }
        }
        return b;
    }

    friend bool operator==(AttackSpec const&, AttackSpec const&) = default;
};

inline LabeledDataset relabel(LabeledDataset ds, AttackSpec const& spec) {
    for (auto& b : ds.labels)
        b = spec.apply(b);
    return ds;
}

inline LabeledDataset label_flip(LabeledDataset ds, int num_classes) {
    return relabel(std::move(ds), AttackSpec{AttackKind::label_flip, num_classes, false, {}});
}

/// Applies the attack to the shards of poisoned agents only.
inline std::vector<LabeledDataset> apply_attack(std::vector<LabeledDataset> shards, Network const& net, AttackSpec const& spec) {
    if (shards.size() != net.size())
        throw InvalidArgument("apply_attack: one shard per agent required");
    for (auto p : net.poisoned_agents())
        shards[p] = relabel(std::move(shards[p]), spec);
    return shards;
}

} // namespace poisonlab
