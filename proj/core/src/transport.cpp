#include "ff/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <thread>

#include "ff/errors.hpp"

namespace ff {

// --- TraceSink ---------------------------------------------------------------

void TraceSink::record(int self, bool sent, int peer, const Message& msg) {
  std::lock_guard lock(mu_);
  per_rank_[self].push_back(TraceEvent{self, sent, peer, msg});
}

std::vector<TraceEvent> TraceSink::events_for(int rank) const {
  std::lock_guard lock(mu_);
  auto it = per_rank_.find(rank);
  return it == per_rank_.end() ? std::vector<TraceEvent>{} : it->second;
}

std::vector<TraceEvent> TraceSink::all_events() const {
  std::lock_guard lock(mu_);
  std::vector<TraceEvent> all;
  for (const auto& [rank, events] : per_rank_) {
    all.insert(all.end(), events.begin(), events.end());
  }
  return all;
}

// --- Baton ---------------------------------------------------------------------

void Baton::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return !held_; });
  held_ = true;
}

void Baton::release() {
  {
    std::lock_guard lock(mu_);
    held_ = false;
  }
  cv_.notify_one();
}

// --- in-process transport --------------------------------------------------------

namespace {

class MessageQueue {
 public:
  explicit MessageQueue(Baton* baton) : baton_(baton) {}

  void push(Message msg) {
    {
      std::lock_guard lock(mu_);
      if (closed_) throw ProtocolError("send on closed channel");
      items_.push_back(std::move(msg));
    }
    cv_.notify_one();
  }

  Message pop() {
    std::unique_lock lock(mu_);
    if (items_.empty()) {
      if (baton_) baton_->release();
      cv_.wait(lock, [&] { return !items_.empty() || closed_; });
      if (baton_) {
        lock.unlock();
        baton_->acquire();
        lock.lock();
      }
    }
    if (items_.empty()) throw ProtocolError("recv on closed channel");
    Message msg = std::move(items_.front());
    items_.pop_front();
    return msg;
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Message> items_;
  bool closed_ = false;
  Baton* baton_ = nullptr;
};

class InprocChannel : public Channel {
 public:
  InprocChannel(MessageQueue* outgoing, MessageQueue* incoming)
      : out_(outgoing), in_(incoming) {}
  void send(const Message& msg) override { out_->push(msg); }
  Message recv() override { return in_->pop(); }
  void close() override {
    out_->close();
    in_->close();
  }

 private:
  MessageQueue* out_;
  MessageQueue* in_;
};

}  // namespace

struct InprocHub::Impl {
  int n_clients = 0;
  // queue[src][dst]; only master<->client pairs are ever used.
  std::vector<std::vector<std::unique_ptr<MessageQueue>>> queues;
};

InprocHub::InprocHub(int n_clients, Baton* baton) : impl_(new Impl), baton_(baton) {
  impl_->n_clients = n_clients;
  const int n = n_clients + 1;
  impl_->queues.resize(static_cast<std::size_t>(n));
  for (auto& row : impl_->queues) {
    row.resize(static_cast<std::size_t>(n));
    for (auto& q : row) q = std::make_unique<MessageQueue>(baton);
  }
}

InprocHub::~InprocHub() = default;

void InprocHub::close_all() {
  for (auto& row : impl_->queues) {
    for (auto& q : row) q->close();
  }
}

namespace {

class InprocLinks : public PartyLinks {
 public:
  InprocLinks(int rank, int n_clients) : rank_(rank), n_clients_(n_clients) {}
  int rank() const override { return rank_; }
  int n_clients() const override { return n_clients_; }
  Channel& to(int peer) override {
    auto it = channels_.find(peer);
    if (it == channels_.end()) throw ProtocolError("no channel to rank " + std::to_string(peer));
    return *it->second;
  }
  void close_all() override {
    for (auto& [peer, ch] : channels_) ch->close();
  }
  std::map<int, std::unique_ptr<InprocChannel>> channels_;

 private:
  int rank_;
  int n_clients_;
};

}  // namespace

std::unique_ptr<PartyLinks> InprocHub::links(int rank) {
  auto links = std::make_unique<InprocLinks>(rank, impl_->n_clients);
  const auto r = static_cast<std::size_t>(rank);
  if (rank == 0) {
    for (int c = 1; c <= impl_->n_clients; ++c) {
      const auto cc = static_cast<std::size_t>(c);
      links->channels_[c] = std::make_unique<InprocChannel>(impl_->queues[r][cc].get(),
                                                            impl_->queues[cc][r].get());
    }
  } else {
    links->channels_[0] =
        std::make_unique<InprocChannel>(impl_->queues[r][0].get(), impl_->queues[0][r].get());
  }
  return links;
}

// --- socket transport -------------------------------------------------------------

namespace {

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = o.fd_;
      o.fd_ = -1;
    }
    return *this;
  }
  ~Socket() { reset(); }
  void reset() {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }
  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }

 private:
  int fd_ = -1;
};

void write_all(int fd, const std::uint8_t* data, std::size_t n) {
  std::size_t done = 0;
  while (done < n) {
    const ssize_t w = ::send(fd, data + done, n - done, MSG_NOSIGNAL);
    if (w <= 0) throw ProtocolError("send on closed channel (socket write failed)");
    done += static_cast<std::size_t>(w);
  }
}

bool read_all(int fd, std::uint8_t* data, std::size_t n) {
  std::size_t done = 0;
  while (done < n) {
    const ssize_t r = ::recv(fd, data + done, n - done, 0);
    if (r == 0) return false;  // orderly shutdown
    if (r < 0) throw ProtocolError("socket read failed");
    done += static_cast<std::size_t>(r);
  }
  return true;
}

class TcpChannel : public Channel {
 public:
  TcpChannel(Socket socket, const FrameTransform* transform)
      : socket_(std::move(socket)), transform_(transform) {}

  void send(const Message& msg) override {
    std::lock_guard lock(send_mu_);
    if (!socket_.valid()) throw ProtocolError("send on closed channel");
    auto frame = wire_encode(msg);
    if (transform_ && transform_->encode) {
      std::vector<std::uint8_t> body(frame.begin() + 4, frame.end());
      body = transform_->encode(std::move(body));
      frame.resize(4);
      const auto len = static_cast<std::uint32_t>(body.size());
      frame[0] = static_cast<std::uint8_t>(len >> 24);
      frame[1] = static_cast<std::uint8_t>(len >> 16);
      frame[2] = static_cast<std::uint8_t>(len >> 8);
      frame[3] = static_cast<std::uint8_t>(len);
      frame.insert(frame.end(), body.begin(), body.end());
    }
    write_all(socket_.fd(), frame.data(), frame.size());
  }

  Message recv() override {
    std::lock_guard lock(recv_mu_);
    if (!socket_.valid()) throw ProtocolError("recv on closed channel");
    std::uint8_t head[4];
    if (!read_all(socket_.fd(), head, 4)) throw ProtocolError("recv on closed channel");
    const std::uint32_t len = (std::uint32_t(head[0]) << 24) | (std::uint32_t(head[1]) << 16) |
                              (std::uint32_t(head[2]) << 8) | std::uint32_t(head[3]);
    if (len > (1u << 30)) throw ProtocolError("wire_decode: length overflow");
    std::vector<std::uint8_t> body(len);
    if (!read_all(socket_.fd(), body.data(), len)) {
      throw ProtocolError("recv on closed channel (truncated frame)");
    }
    if (transform_ && transform_->decode) body = transform_->decode(std::move(body));
    std::vector<std::uint8_t> frame;
    frame.reserve(4 + body.size());
    const auto blen = static_cast<std::uint32_t>(body.size());
    frame.push_back(static_cast<std::uint8_t>(blen >> 24));
    frame.push_back(static_cast<std::uint8_t>(blen >> 16));
    frame.push_back(static_cast<std::uint8_t>(blen >> 8));
    frame.push_back(static_cast<std::uint8_t>(blen));
    frame.insert(frame.end(), body.begin(), body.end());
    return wire_decode(frame);
  }

  void close() override { socket_.reset(); }

 private:
  Socket socket_;
  const FrameTransform* transform_;
  std::mutex send_mu_;
  std::mutex recv_mu_;
};

class TcpLinks : public PartyLinks {
 public:
  TcpLinks(int rank, int n_clients) : rank_(rank), n_clients_(n_clients) {}
  int rank() const override { return rank_; }
  int n_clients() const override { return n_clients_; }
  Channel& to(int peer) override {
    auto it = channels_.find(peer);
    if (it == channels_.end()) throw ProtocolError("no channel to rank " + std::to_string(peer));
    return *it->second;
  }
  void close_all() override {
    for (auto& [peer, ch] : channels_) ch->close();
  }
  std::map<int, std::unique_ptr<TcpChannel>> channels_;

 private:
  int rank_;
  int n_clients_;
};

}  // namespace

TcpListener::TcpListener(std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw ProtocolError("cannot create listen socket");
  const int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const bool in_use = errno == EADDRINUSE;
    ::close(fd_);
    fd_ = -1;
    throw ProtocolError("cannot bind port " + std::to_string(port) +
                        (in_use ? " (port in use)" : ""));
  }
  if (::listen(fd_, 16) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw ProtocolError("listen failed");
  }

  sockaddr_in actual{};
  socklen_t len = sizeof(actual);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&actual), &len);
  port_ = ntohs(actual.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

TcpListener::TcpListener(TcpListener&& o) noexcept : fd_(o.fd_), port_(o.port_) { o.fd_ = -1; }

TcpListener& TcpListener::operator=(TcpListener&& o) noexcept {
  if (this != &o) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = o.fd_;
    port_ = o.port_;
    o.fd_ = -1;
  }
  return *this;
}

std::unique_ptr<PartyLinks> TcpListener::accept_clients(int n_clients,
                                                        const FrameTransform* transform) {
  auto links = std::make_unique<TcpLinks>(0, n_clients);
  for (int i = 0; i < n_clients; ++i) {
    Socket conn(::accept(fd_, nullptr, nullptr));
    if (!conn.valid()) throw ProtocolError("accept failed");
    const int nd = 1;
    ::setsockopt(conn.fd(), IPPROTO_TCP, TCP_NODELAY, &nd, sizeof(nd));
    std::uint8_t hello = 0;
    if (!read_all(conn.fd(), &hello, 1)) throw ProtocolError("client hello missing");
    const int rank = hello;
    if (rank < 1 || rank > n_clients || links->channels_.count(rank)) {
      throw ProtocolError("bad client hello rank " + std::to_string(rank));
    }
    links->channels_[rank] = std::make_unique<TcpChannel>(std::move(conn), transform);
  }
  return links;
}

std::unique_ptr<PartyLinks> TcpMasterLinks::listen_and_accept(int n_clients, std::uint16_t port,
                                                              const FrameTransform* transform) {
  TcpListener listener(port);
  return listener.accept_clients(n_clients, transform);
}

std::unique_ptr<PartyLinks> TcpClientLinks::connect(int self_rank, int n_clients,
                                                    const std::string& host, std::uint16_t port,
                                                    const FrameTransform* transform) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(15);
  for (;;) {
    Socket sock(::socket(AF_INET, SOCK_STREAM, 0));
    if (!sock.valid()) throw ProtocolError("cannot create socket");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
      throw ProtocolError("bad host address: " + host);
    }
    if (::connect(sock.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0) {
      const int nd = 1;
      ::setsockopt(sock.fd(), IPPROTO_TCP, TCP_NODELAY, &nd, sizeof(nd));
      const auto hello = static_cast<std::uint8_t>(self_rank);
      write_all(sock.fd(), &hello, 1);
      auto links = std::make_unique<TcpLinks>(self_rank, n_clients);
      links->channels_[0] = std::make_unique<TcpChannel>(std::move(sock), transform);
      return links;
    }
    if (std::chrono::steady_clock::now() > deadline) {
      throw ProtocolError("cannot connect to " + host + ":" + std::to_string(port));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

// --- PartyEndpoint -------------------------------------------------------------------

PartyEndpoint::PartyEndpoint(std::unique_ptr<PartyLinks> links, TraceSink* trace)
    : links_(std::move(links)), trace_(trace) {}

PartyEndpoint::~PartyEndpoint() {
  if (links_) links_->close_all();
}

int PartyEndpoint::rank() const { return links_->rank(); }
int PartyEndpoint::n_clients() const { return links_->n_clients(); }

void PartyEndpoint::set_phase(const std::string& phase) { phase_ = phase; }

MessageStats& PartyEndpoint::cur() { return stats_[phase_]; }

void PartyEndpoint::send(int dest, const Message& msg) {
  links_->to(dest).send(msg);
  auto& s = cur();
  s.point_to_point += 1;
  s.total_payload_ids += payload_id_count(msg);
  if (trace_) trace_->record(rank(), true, dest, msg);
}

Message PartyEndpoint::recv(int src) {
  Message msg = links_->to(src).recv();
  auto& s = cur();
  s.point_to_point += 1;
  s.total_payload_ids += payload_id_count(msg);
  if (trace_) trace_->record(rank(), false, src, msg);
  return msg;
}

void PartyEndpoint::broadcast(const Message& msg) {
  if (rank() != 0) throw ProtocolError("broadcast is master-only");
  cur().broadcasts += 1;
  for (int c = 1; c <= n_clients(); ++c) send(c, msg);
}

std::vector<std::pair<int, Message>> PartyEndpoint::gather() {
  if (rank() != 0) throw ProtocolError("gather is master-only");
  cur().gathers += 1;
  std::vector<std::pair<int, Message>> out;
  out.reserve(static_cast<std::size_t>(n_clients()));
  for (int c = 1; c <= n_clients(); ++c) {
    try {
      out.emplace_back(c, recv(c));
    } catch (const ProtocolError& e) {
      throw ProtocolError("gather: client " + std::to_string(c) + " failed: " + e.what());
    }
  }
  return out;
}

MessageStats PartyEndpoint::phase_stats(const std::string& phase) const {
  auto it = stats_.find(phase);
  return it == stats_.end() ? MessageStats{} : it->second;
}

MessageStats PartyEndpoint::current_stats() const {
  auto it = stats_.find(phase_);
  return it == stats_.end() ? MessageStats{} : it->second;
}

void PartyEndpoint::close() {
  if (links_) links_->close_all();
}

}  // namespace ff
