#include "ff/messages.hpp"

#include <bit>
#include <cstring>

#include "ff/errors.hpp"

namespace ff {
namespace {

constexpr std::size_t kMaxFrameBody = 1u << 30;  // 1 GiB sanity cap

enum Tag : std::uint8_t {
  kTrainInit = 1,
  kLocalBest = 2,
  kWinnerNotify = 3,
  kSplitIndices = 4,
  kSplitBroadcast = 5,
  kMakeLeaf = 6,
  kTreeDone = 7,
  kPredictInit = 8,
  kLeafAssignments = 9,
  kClassicalRoute = 10,
  kClassicalRouteReply = 11,
  kShutdown = 12,
};

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    buf_.push_back(static_cast<std::uint8_t>(v >> 24));
    buf_.push_back(static_cast<std::uint8_t>(v >> 16));
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
    buf_.push_back(static_cast<std::uint8_t>(v));
  }
  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v >> 32));
    u32(static_cast<std::uint32_t>(v));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void rows(const std::vector<std::int32_t>& v) {
    u32(static_cast<std::uint32_t>(v.size()));
    for (auto x : v) i32(x);
  }
  void feature_ids(const std::vector<FeatureId>& v) {
    u32(static_cast<std::uint32_t>(v.size()));
    for (auto f : v) u32(f.value);
  }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = (std::uint32_t(data_[pos_]) << 24) | (std::uint32_t(data_[pos_ + 1]) << 16) |
                      (std::uint32_t(data_[pos_ + 2]) << 8) | std::uint32_t(data_[pos_ + 3]);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    const std::uint64_t hi = u32();
    return (hi << 32) | u32();
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::vector<std::int32_t> rows() {
    const std::uint32_t n = u32();
    need(4ull * n);
    std::vector<std::int32_t> v(n);
    for (auto& x : v) x = i32();
    return v;
  }
  std::vector<FeatureId> feature_ids() {
    const std::uint32_t n = u32();
    need(4ull * n);
    std::vector<FeatureId> v(n);
    for (auto& f : v) f.value = u32();
    return v;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::uint64_t n) {
    if (pos_ + n > data_.size()) throw ProtocolError("wire_decode: truncated frame");
  }
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

void encode_body(const Message& msg, Writer& w) {
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, TrainInit>) {
          w.u8(kTrainInit);
          w.i32(m.tree_id);
          w.rows(m.sample_rows);
          w.feature_ids(m.feature_ids);
        } else if constexpr (std::is_same_v<T, LocalBest>) {
          w.u8(kLocalBest);
          w.i32(m.tree_id);
          w.i32(m.node_id);
          w.u8(m.improvement.has_value() ? 1 : 0);
          if (m.improvement) w.f64(*m.improvement);
        } else if constexpr (std::is_same_v<T, WinnerNotify>) {
          w.u8(kWinnerNotify);
          w.i32(m.tree_id);
          w.i32(m.node_id);
        } else if constexpr (std::is_same_v<T, SplitIndices>) {
          w.u8(kSplitIndices);
          w.i32(m.tree_id);
          w.i32(m.node_id);
          w.u32(m.feature.value);
          w.f64(m.threshold);
          w.rows(m.left_rows);
          w.rows(m.right_rows);
        } else if constexpr (std::is_same_v<T, SplitBroadcast>) {
          w.u8(kSplitBroadcast);
          w.i32(m.tree_id);
          w.i32(m.node_id);
          w.rows(m.left_rows);
          w.rows(m.right_rows);
        } else if constexpr (std::is_same_v<T, MakeLeaf>) {
          w.u8(kMakeLeaf);
          w.i32(m.tree_id);
          w.i32(m.node_id);
        } else if constexpr (std::is_same_v<T, TreeDone>) {
          w.u8(kTreeDone);
          w.i32(m.tree_id);
        } else if constexpr (std::is_same_v<T, PredictInit>) {
          w.u8(kPredictInit);
          w.i32(m.n_test);
          w.u8(static_cast<std::uint8_t>(m.method));
          w.u8(m.batch_all_trees ? 1 : 0);
        } else if constexpr (std::is_same_v<T, LeafAssignmentsMsg>) {
          w.u8(kLeafAssignments);
          w.u32(static_cast<std::uint32_t>(m.trees.size()));
          for (const auto& t : m.trees) {
            w.i32(t.tree_id);
            w.u32(static_cast<std::uint32_t>(t.leaf_rows.size()));
            for (const auto& [leaf, rows] : t.leaf_rows) {
              w.i32(leaf);
              w.rows(rows);
            }
          }
        } else if constexpr (std::is_same_v<T, ClassicalRoute>) {
          w.u8(kClassicalRoute);
          w.i32(m.tree_id);
          w.i32(m.node_id);
          w.rows(m.rows);
        } else if constexpr (std::is_same_v<T, ClassicalRouteReply>) {
          w.u8(kClassicalRouteReply);
          w.i32(m.tree_id);
          w.i32(m.node_id);
          w.rows(m.left_rows);
          w.rows(m.right_rows);
        } else if constexpr (std::is_same_v<T, Shutdown>) {
          w.u8(kShutdown);
        }
      },
      msg);
}

Message decode_body(Reader& r) {
  const std::uint8_t tag = r.u8();
  switch (tag) {
    case kTrainInit: {
      TrainInit m;
      m.tree_id = r.i32();
      m.sample_rows = r.rows();
      m.feature_ids = r.feature_ids();
      return m;
    }
    case kLocalBest: {
      LocalBest m;
      m.tree_id = r.i32();
      m.node_id = r.i32();
      if (r.u8()) m.improvement = r.f64();
      return m;
    }
    case kWinnerNotify: {
      WinnerNotify m;
      m.tree_id = r.i32();
      m.node_id = r.i32();
      return m;
    }
    case kSplitIndices: {
      SplitIndices m;
      m.tree_id = r.i32();
      m.node_id = r.i32();
      m.feature.value = r.u32();
      m.threshold = r.f64();
      m.left_rows = r.rows();
      m.right_rows = r.rows();
      return m;
    }
    case kSplitBroadcast: {
      SplitBroadcast m;
      m.tree_id = r.i32();
      m.node_id = r.i32();
      m.left_rows = r.rows();
      m.right_rows = r.rows();
      return m;
    }
    case kMakeLeaf: {
      MakeLeaf m;
      m.tree_id = r.i32();
      m.node_id = r.i32();
      return m;
    }
    case kTreeDone: {
      TreeDone m;
      m.tree_id = r.i32();
      return m;
    }
    case kPredictInit: {
      PredictInit m;
      m.n_test = r.i32();
      const std::uint8_t method = r.u8();
      if (method > 1) throw ProtocolError("wire_decode: bad predict method");
      m.method = static_cast<PredictMethod>(method);
      m.batch_all_trees = r.u8() != 0;
      return m;
    }
    case kLeafAssignments: {
      LeafAssignmentsMsg m;
      const std::uint32_t n_trees = r.u32();
      m.trees.reserve(n_trees);
      for (std::uint32_t t = 0; t < n_trees; ++t) {
        TreeLeafSets sets;
        sets.tree_id = r.i32();
        const std::uint32_t n_leaves = r.u32();
        sets.leaf_rows.reserve(n_leaves);
        for (std::uint32_t l = 0; l < n_leaves; ++l) {
          const std::int32_t leaf = r.i32();
          sets.leaf_rows.emplace_back(leaf, r.rows());
        }
        m.trees.push_back(std::move(sets));
      }
      return m;
    }
    case kClassicalRoute: {
      ClassicalRoute m;
      m.tree_id = r.i32();
      m.node_id = r.i32();
      m.rows = r.rows();
      return m;
    }
    case kClassicalRouteReply: {
      ClassicalRouteReply m;
      m.tree_id = r.i32();
      m.node_id = r.i32();
      m.left_rows = r.rows();
      m.right_rows = r.rows();
      return m;
    }
    case kShutdown:
      return Shutdown{};
    default:
      throw ProtocolError("wire_decode: unknown tag " + std::to_string(tag));
  }
}

}  // namespace

std::vector<std::uint8_t> wire_encode(const Message& msg) {
  Writer body;
  encode_body(msg, body);
  auto bytes = body.take();
  if (bytes.size() > kMaxFrameBody) throw ProtocolError("wire_encode: frame too large");

  std::vector<std::uint8_t> frame;
  frame.reserve(4 + bytes.size());
  const auto len = static_cast<std::uint32_t>(bytes.size());
  frame.push_back(static_cast<std::uint8_t>(len >> 24));
  frame.push_back(static_cast<std::uint8_t>(len >> 16));
  frame.push_back(static_cast<std::uint8_t>(len >> 8));
  frame.push_back(static_cast<std::uint8_t>(len));
  frame.insert(frame.end(), bytes.begin(), bytes.end());
  return frame;
}

Message wire_decode(std::span<const std::uint8_t> frame) {
  if (frame.size() < 4) throw ProtocolError("wire_decode: truncated frame");
  const std::uint32_t len = (std::uint32_t(frame[0]) << 24) | (std::uint32_t(frame[1]) << 16) |
                            (std::uint32_t(frame[2]) << 8) | std::uint32_t(frame[3]);
  if (len > kMaxFrameBody) throw ProtocolError("wire_decode: length overflow");
  if (frame.size() < 4ull + len) throw ProtocolError("wire_decode: truncated frame");
  if (frame.size() > 4ull + len) throw ProtocolError("wire_decode: trailing bytes");
  if (len == 0) throw ProtocolError("wire_decode: empty body");

  Reader r(frame.subspan(4));
  Message msg = decode_body(r);
  if (!r.done()) throw ProtocolError("wire_decode: trailing bytes in body");
  return msg;
}

std::string message_kind(const Message& msg) {
  return std::visit(
      [](const auto& m) -> std::string {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, TrainInit>) return "TrainInit";
        if constexpr (std::is_same_v<T, LocalBest>) return "LocalBest";
        if constexpr (std::is_same_v<T, WinnerNotify>) return "WinnerNotify";
        if constexpr (std::is_same_v<T, SplitIndices>) return "SplitIndices";
        if constexpr (std::is_same_v<T, SplitBroadcast>) return "SplitBroadcast";
        if constexpr (std::is_same_v<T, MakeLeaf>) return "MakeLeaf";
        if constexpr (std::is_same_v<T, TreeDone>) return "TreeDone";
        if constexpr (std::is_same_v<T, PredictInit>) return "PredictInit";
        if constexpr (std::is_same_v<T, LeafAssignmentsMsg>) return "LeafAssignments";
        if constexpr (std::is_same_v<T, ClassicalRoute>) return "ClassicalRoute";
        if constexpr (std::is_same_v<T, ClassicalRouteReply>) return "ClassicalRouteReply";
        if constexpr (std::is_same_v<T, Shutdown>) return "Shutdown";
      },
      msg);
}

std::uint64_t payload_id_count(const Message& msg) {
  return std::visit(
      [](const auto& m) -> std::uint64_t {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, TrainInit>) {
          return m.sample_rows.size() + m.feature_ids.size();
        } else if constexpr (std::is_same_v<T, SplitIndices>) {
          return 1 + m.left_rows.size() + m.right_rows.size();
        } else if constexpr (std::is_same_v<T, SplitBroadcast>) {
          return m.left_rows.size() + m.right_rows.size();
        } else if constexpr (std::is_same_v<T, LeafAssignmentsMsg>) {
          std::uint64_t n = 0;
          for (const auto& t : m.trees) {
            for (const auto& [leaf, rows] : t.leaf_rows) n += 1 + rows.size();
          }
          return n;
        } else if constexpr (std::is_same_v<T, ClassicalRoute>) {
          return m.rows.size();
        } else if constexpr (std::is_same_v<T, ClassicalRouteReply>) {
          return m.left_rows.size() + m.right_rows.size();
        } else {
          return 0;
        }
      },
      msg);
}

}  // namespace ff
