#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "ff/messages.hpp"

namespace ff {

/// Per-phase message accounting, kept at the master endpoint. The star
/// topology means the master sees every message once (as sender or receiver),
/// so these counters are system totals. Counters only ever grow.
struct MessageStats {
  std::uint64_t point_to_point = 0;
  std::uint64_t broadcasts = 0;
  std::uint64_t gathers = 0;
  std::uint64_t total_payload_ids = 0;

  MessageStats operator-(const MessageStats& o) const {
    return {point_to_point - o.point_to_point, broadcasts - o.broadcasts, gathers - o.gathers,
            total_payload_ids - o.total_payload_ids};
  }
  bool operator==(const MessageStats&) const = default;
};

struct TraceEvent {
  int self = 0;
  bool sent = false;  // false = received
  int peer = 0;
  Message message;
};

/// Thread-safe recorder of every endpoint's send/recv sequence. Per-endpoint
/// sequences are deterministic; a global interleaving would not be.
class TraceSink {
 public:
  void record(int self, bool sent, int peer, const Message& msg);
  std::vector<TraceEvent> events_for(int rank) const;
  std::vector<TraceEvent> all_events() const;

 private:
  mutable std::mutex mu_;
  std::map<int, std::vector<TraceEvent>> per_rank_;
};

/// Serializes party threads: at most one holder runs at a time; blocking
/// waits release it so another party can make progress.
class Baton {
 public:
  void acquire();
  void release();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  bool held_ = false;
};

/// One directed, ordered, reliable message pipe.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual void send(const Message& msg) = 0;
  virtual Message recv() = 0;  // blocks; throws ProtocolError once closed and drained
  virtual void close() = 0;
};

/// A party's transport-level view: rank plus channels to its peers
/// (master: 1..M, client: 0).
class PartyLinks {
 public:
  virtual ~PartyLinks() = default;
  virtual int rank() const = 0;
  virtual int n_clients() const = 0;
  virtual Channel& to(int peer) = 0;
  virtual void close_all() = 0;
};

// --- in-process transport ------------------------------------------------------

/// Queue-backed hub for hosting all parties in one process. Channels pass
/// Message values directly (no framing). With a Baton, blocking pops release
/// it so the run is cooperatively serialized.
class InprocHub {
 public:
  explicit InprocHub(int n_clients, Baton* baton = nullptr);
  ~InprocHub();

  std::unique_ptr<PartyLinks> links(int rank);
  void close_all();
  Baton* baton() const { return baton_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  Baton* baton_ = nullptr;
};

// --- socket transport ----------------------------------------------------------

/// Optional byte-level frame transform (e.g. channel encryption) applied to
/// the frame body; the length prefix stays plain.
struct FrameTransform {
  std::function<std::vector<std::uint8_t>(std::vector<std::uint8_t>)> encode;
  std::function<std::vector<std::uint8_t>(std::vector<std::uint8_t>)> decode;
};

/// Master side: binds 127.0.0.1:port (port 0 picks one); port() is known as
/// soon as the constructor returns, before any client connects. Each
/// accepted client identifies itself with a 1-byte rank hello.
class TcpListener {
 public:
  explicit TcpListener(std::uint16_t port);
  ~TcpListener();
  TcpListener(TcpListener&&) noexcept;
  TcpListener& operator=(TcpListener&&) noexcept;

  std::uint16_t port() const { return port_; }
  std::unique_ptr<PartyLinks> accept_clients(int n_clients,
                                             const FrameTransform* transform = nullptr);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Bind + accept in one call, for when the port is fixed up front.
class TcpMasterLinks {
 public:
  static std::unique_ptr<PartyLinks> listen_and_accept(int n_clients, std::uint16_t port,
                                                       const FrameTransform* transform = nullptr);
};

/// Client side: connects to the master and sends its rank hello. Retries the
/// connect briefly so client processes may start before the master listens.
class TcpClientLinks {
 public:
  static std::unique_ptr<PartyLinks> connect(int self_rank, int n_clients,
                                             const std::string& host, std::uint16_t port,
                                             const FrameTransform* transform = nullptr);
};

// --- protocol endpoint ----------------------------------------------------------

/// Send/recv/broadcast/gather over a PartyLinks, with per-phase accounting
/// and optional tracing. Collectives are master-only by contract.
class PartyEndpoint {
 public:
  explicit PartyEndpoint(std::unique_ptr<PartyLinks> links, TraceSink* trace = nullptr);
  ~PartyEndpoint();

  int rank() const;
  int n_clients() const;
  void set_phase(const std::string& phase);

  void send(int dest, const Message& msg);
  Message recv(int src);
  /// One copy per client; counts one broadcast and M point-to-point sends.
  void broadcast(const Message& msg);
  /// Exactly one message per client, returned ordered by rank ascending.
  std::vector<std::pair<int, Message>> gather();

  const std::map<std::string, MessageStats>& stats_by_phase() const { return stats_; }
  MessageStats phase_stats(const std::string& phase) const;
  MessageStats current_stats() const;

  void close();

 private:
  MessageStats& cur();
  std::unique_ptr<PartyLinks> links_;
  TraceSink* trace_ = nullptr;
  std::string phase_ = "default";
  std::map<std::string, MessageStats> stats_;
};

}  // namespace ff
