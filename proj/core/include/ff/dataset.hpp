#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ff/csv.hpp"

namespace ff {

/// Salted SHA-256 of a raw sample id, rendered as 64 lowercase hex chars.
/// Equal (raw id, salt) pairs always give equal digests.
struct HashedId {
  std::string digest;
  auto operator<=>(const HashedId&) const = default;
};

/// Opaque feature identifier, globally unique across parties. The master only
/// ever sees these values, never the original column names.
struct FeatureId {
  std::uint32_t value = 0;
  auto operator<=>(const FeatureId&) const = default;
};

/// rank -> sorted feature ids owned by that party. This is all the master
/// knows about the feature space.
using MasterView = std::map<int, std::vector<FeatureId>>;

/// One party's vertical slice of the data: its own feature columns plus the
/// shared sample ids and the shared label copy. Feature id sets of distinct
/// shards are disjoint; sample order is identical across all shards of one
/// dataset once aligned.
struct ClientShard {
  int party_rank = 0;                             // 1..M
  std::vector<HashedId> sample_ids;               // canonical order after align
  std::map<FeatureId, std::vector<double>> features;
  std::vector<double> labels;                     // aligned with sample_ids
  std::map<FeatureId, std::string> name_map;      // local secret, never shared

  std::size_t n_rows() const { return sample_ids.size(); }
};

/// Hashes raw ids with the given salt. Throws DataError on an empty input or
/// duplicate raw ids (alignment requires unique ids).
std::vector<HashedId> hash_ids(std::span<const std::string> raw_ids, const std::string& salt);

/// Restricts every shard to the ids common to all shards and reorders rows to
/// the canonical order (ascending digest). Idempotent. Throws DataError when
/// the intersection is empty.
std::vector<ClientShard> align_shards(const std::vector<ClientShard>& shards);

/// Randomly assigns the table's feature columns to m shards (each gets at
/// least one), copying ids and labels to every shard. Deterministic for a
/// fixed seed. Feature ids are provisional (column indices); run
/// encode_features afterwards to assign the final opaque ids.
std::vector<ClientShard> vertical_partition(const RawTable& table,
                                            std::span<const HashedId> ids,
                                            int m, std::uint64_t seed);

/// Re-keys every shard's features with globally unique opaque ids and returns
/// the master's view of the assignment (ids only, no names). seed == 0 keeps
/// the natural party-major numbering 0..F-1; other seeds permute it. Name
/// maps stay local to each shard.
MasterView encode_features(std::vector<ClientShard>& shards, std::uint64_t seed = 0);

// --- shard directory layout -------------------------------------------------
//
//   <dir>/party_<rank>/data.csv      sample_id, <original feature names...>[, label]
//   <dir>/party_<rank>/features.map  encoded_id <TAB> name   (kept local)
//   <dir>/master.view                rank <TAB> id,id,...

void write_shard_dir(const std::string& dir, const std::vector<ClientShard>& shards,
                     const MasterView& view, const std::string& label_name);

std::vector<ClientShard> read_shard_dir(const std::string& dir);
ClientShard read_party_dir(const std::string& dir, int rank);
MasterView read_master_view(const std::string& dir);

/// Number of party_<rank> subdirectories present.
int count_parties(const std::string& dir);

}  // namespace ff
