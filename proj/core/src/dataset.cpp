#include "ff/dataset.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ff/errors.hpp"
#include "ff/rng.hpp"

namespace fs = std::filesystem;

namespace ff {
namespace {

std::string sha256_hex(const std::string& data) {
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out, &len, EVP_sha256(), nullptr) != 1) {
    throw DataError("sha256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string s;
  s.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    s.push_back(hex[out[i] >> 4]);
    s.push_back(hex[out[i] & 0xF]);
  }
  return s;
}

}  // namespace

std::vector<HashedId> hash_ids(std::span<const std::string> raw_ids, const std::string& salt) {
  if (raw_ids.empty()) throw DataError("hash_ids: no ids given");
  std::set<std::string> seen;
  std::vector<HashedId> out;
  out.reserve(raw_ids.size());
  for (const auto& id : raw_ids) {
    if (!seen.insert(id).second) throw DataError("hash_ids: duplicate raw id '" + id + "'");
    // 0x1f separator keeps (salt, id) unambiguous.
    out.push_back(HashedId{sha256_hex(salt + '\x1f' + id)});
  }
  return out;
}

std::vector<ClientShard> align_shards(const std::vector<ClientShard>& shards) {
  if (shards.empty()) throw DataError("align_shards: no shards");

  std::set<HashedId> common(shards[0].sample_ids.begin(), shards[0].sample_ids.end());
  for (std::size_t i = 1; i < shards.size(); ++i) {
    std::set<HashedId> next;
    for (const auto& id : shards[i].sample_ids) {
      if (common.count(id)) next.insert(id);
    }
    common.swap(next);
  }
  if (common.empty()) throw DataError("align_shards: no common samples");

  // std::set iterates ascending, which is exactly the canonical order.
  std::vector<HashedId> order(common.begin(), common.end());

  std::vector<ClientShard> out;
  out.reserve(shards.size());
  for (const auto& shard : shards) {
    std::map<HashedId, std::size_t> row_of;
    for (std::size_t r = 0; r < shard.sample_ids.size(); ++r) row_of[shard.sample_ids[r]] = r;

    ClientShard aligned;
    aligned.party_rank = shard.party_rank;
    aligned.sample_ids = order;
    aligned.name_map = shard.name_map;
    for (const auto& [fid, col] : shard.features) {
      std::vector<double> new_col;
      new_col.reserve(order.size());
      for (const auto& id : order) new_col.push_back(col[row_of.at(id)]);
      aligned.features.emplace(fid, std::move(new_col));
    }
    if (!shard.labels.empty()) {
      aligned.labels.reserve(order.size());
      for (const auto& id : order) aligned.labels.push_back(shard.labels[row_of.at(id)]);
    }
    out.push_back(std::move(aligned));
  }
  return out;
}

std::vector<ClientShard> vertical_partition(const RawTable& table,
                                            std::span<const HashedId> ids,
                                            int m, std::uint64_t seed) {
  if (m < 1) throw UsageError("vertical_partition: party count must be >= 1");
  const std::size_t n_feat = table.n_features();
  if (n_feat < static_cast<std::size_t>(m)) {
    throw DataError("vertical_partition: " + std::to_string(m) + " parties but only " +
                    std::to_string(n_feat) + " features");
  }
  if (ids.size() != table.n_rows()) throw DataError("vertical_partition: id/row count mismatch");

  std::vector<std::uint32_t> cols(n_feat);
  for (std::size_t c = 0; c < n_feat; ++c) cols[c] = static_cast<std::uint32_t>(c);

  Xoshiro256ss rng(mix_seed(seed, 0x7041u));
  shuffle_inplace(rng, cols);

  // First m shuffled columns guarantee one feature per party; the rest land
  // wherever the stream says.
  std::vector<int> owner(n_feat, 0);
  for (std::size_t i = 0; i < n_feat; ++i) {
    owner[cols[i]] = i < static_cast<std::size_t>(m)
                         ? static_cast<int>(i) + 1
                         : static_cast<int>(rng.next_below(static_cast<std::uint64_t>(m))) + 1;
  }

  std::vector<ClientShard> shards(static_cast<std::size_t>(m));
  for (int r = 1; r <= m; ++r) {
    auto& shard = shards[static_cast<std::size_t>(r - 1)];
    shard.party_rank = r;
    shard.sample_ids.assign(ids.begin(), ids.end());
    shard.labels = table.labels;
  }
  for (std::size_t c = 0; c < n_feat; ++c) {
    auto& shard = shards[static_cast<std::size_t>(owner[c] - 1)];
    const FeatureId fid{static_cast<std::uint32_t>(c)};  // provisional id
    std::vector<double> col;
    col.reserve(table.n_rows());
    for (const auto& row : table.rows) col.push_back(row[c]);
    shard.features.emplace(fid, std::move(col));
    shard.name_map.emplace(fid, table.feature_names[c]);
  }
  return shards;
}

MasterView encode_features(std::vector<ClientShard>& shards, std::uint64_t seed) {
  std::size_t total = 0;
  for (const auto& s : shards) total += s.features.size();

  std::vector<std::uint32_t> new_ids(total);
  for (std::size_t i = 0; i < total; ++i) new_ids[i] = static_cast<std::uint32_t>(i);
  if (seed != 0) {
    Xoshiro256ss rng(mix_seed(seed, 0xE2C0u));
    shuffle_inplace(rng, new_ids);
  }

  // Assignment walks parties rank-ascending, features in old-id order.
  std::sort(shards.begin(), shards.end(),
            [](const ClientShard& a, const ClientShard& b) { return a.party_rank < b.party_rank; });

  MasterView view;
  std::size_t next = 0;
  for (auto& shard : shards) {
    std::map<FeatureId, std::vector<double>> features;
    std::map<FeatureId, std::string> names;
    std::vector<FeatureId> assigned;
    for (auto& [old_id, col] : shard.features) {
      const FeatureId fid{new_ids[next++]};
      features.emplace(fid, std::move(col));
      names.emplace(fid, shard.name_map.at(old_id));
      assigned.push_back(fid);
    }
    shard.features = std::move(features);
    shard.name_map = std::move(names);
    std::sort(assigned.begin(), assigned.end());
    view.emplace(shard.party_rank, std::move(assigned));
  }
  return view;
}

void write_shard_dir(const std::string& dir, const std::vector<ClientShard>& shards,
                     const MasterView& view, const std::string& label_name) {
  fs::create_directories(dir);
  for (const auto& shard : shards) {
    const fs::path party = fs::path(dir) / ("party_" + std::to_string(shard.party_rank));
    fs::create_directories(party);

    std::ofstream map_out(party / "features.map");
    for (const auto& [fid, name] : shard.name_map) {
      map_out << fid.value << '\t' << name << '\n';
    }

    std::ofstream data(party / "data.csv");
    data << "sample_id";
    for (const auto& [fid, name] : shard.name_map) data << ',' << name;
    if (!shard.labels.empty()) data << ',' << (label_name.empty() ? "label" : label_name);
    data << '\n';
    for (std::size_t r = 0; r < shard.n_rows(); ++r) {
      data << shard.sample_ids[r].digest;
      for (const auto& [fid, col] : shard.features) data << ',' << format_double(col[r]);
      if (!shard.labels.empty()) data << ',' << format_double(shard.labels[r]);
      data << '\n';
    }
  }

  std::ofstream view_out(fs::path(dir) / "master.view");
  for (const auto& [rank, fids] : view) {
    view_out << rank << '\t';
    for (std::size_t i = 0; i < fids.size(); ++i) {
      if (i) view_out << ',';
      view_out << fids[i].value;
    }
    view_out << '\n';
  }
}

ClientShard read_party_dir(const std::string& dir, int rank) {
  const fs::path party = fs::path(dir) / ("party_" + std::to_string(rank));
  if (!fs::exists(party)) throw DataError("missing party directory: " + party.string());

  ClientShard shard;
  shard.party_rank = rank;

  std::map<std::string, FeatureId> id_of_name;
  std::ifstream map_in(party / "features.map");
  if (!map_in) throw DataError("missing features.map in " + party.string());
  std::string line;
  while (std::getline(map_in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("malformed features.map line: " + line);
    const FeatureId fid{static_cast<std::uint32_t>(std::stoul(line.substr(0, tab)))};
    const std::string name = line.substr(tab + 1);
    shard.name_map.emplace(fid, name);
    id_of_name.emplace(name, fid);
  }

  std::ifstream data(party / "data.csv");
  if (!data) throw DataError("missing data.csv in " + party.string());
  std::string header;
  if (!std::getline(data, header)) throw DataError("empty data.csv in " + party.string());
  if (!header.empty() && header.back() == '\r') header.pop_back();

  std::vector<std::string> cols;
  {
    std::stringstream ss(header);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
  }
  if (cols.empty() || cols[0] != "sample_id") {
    throw DataError("data.csv must start with a sample_id column in " + party.string());
  }

  // Columns between sample_id and an optional trailing label are features.
  std::vector<FeatureId> col_fid;
  bool has_label = false;
  for (std::size_t c = 1; c < cols.size(); ++c) {
    auto it = id_of_name.find(cols[c]);
    if (it == id_of_name.end()) {
      if (c == cols.size() - 1) {
        has_label = true;
        break;
      }
      throw DataError("column '" + cols[c] + "' not in features.map of " + party.string());
    }
    col_fid.push_back(it->second);
  }

  for (const auto& fid : col_fid) shard.features.emplace(fid, std::vector<double>{});

  while (std::getline(data, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t c = 0;
    while (std::getline(ss, cell, ',')) {
      if (c == 0) {
        shard.sample_ids.push_back(HashedId{cell});
      } else if (c <= col_fid.size()) {
        shard.features.at(col_fid[c - 1]).push_back(std::stod(cell));
      } else if (has_label) {
        shard.labels.push_back(std::stod(cell));
      }
      ++c;
    }
  }
  return shard;
}

MasterView read_master_view(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "master.view");
  if (!in) throw DataError("missing master.view in " + dir);
  MasterView view;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("malformed master.view line: " + line);
    const int rank = std::stoi(line.substr(0, tab));
    std::vector<FeatureId> fids;
    std::stringstream ss(line.substr(tab + 1));
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (!cell.empty()) fids.push_back(FeatureId{static_cast<std::uint32_t>(std::stoul(cell))});
    }
    std::sort(fids.begin(), fids.end());
    view.emplace(rank, std::move(fids));
  }
  if (view.empty()) throw DataError("master.view is empty in " + dir);
  return view;
}

int count_parties(const std::string& dir) {
  int count = 0;
  while (fs::exists(fs::path(dir) / ("party_" + std::to_string(count + 1)))) ++count;
  return count;
}

std::vector<ClientShard> read_shard_dir(const std::string& dir) {
  const int m = count_parties(dir);
  if (m == 0) throw DataError("no party_<rank> directories in " + dir);
  std::vector<ClientShard> shards;
  shards.reserve(static_cast<std::size_t>(m));
  for (int r = 1; r <= m; ++r) shards.push_back(read_party_dir(dir, r));
  return shards;
}

}  // namespace ff
