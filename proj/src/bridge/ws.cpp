#include "bridge/ws.hpp"

#include <atomic>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/io_context.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "core/errors.hpp"

namespace scaletwin {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

HostPort parse_host_port(const std::string& text, const std::string& default_host) {
  HostPort hp;
  hp.host = default_host;
  std::string port = text;
  if (const auto colon = text.rfind(':'); colon != std::string::npos) {
    if (colon > 0) hp.host = text.substr(0, colon);
    port = text.substr(colon + 1);
  }
  char* end = nullptr;
  const long p = std::strtol(port.c_str(), &end, 10);
  if (port.empty() || *end != '\0' || p < 0 || p > 65535) throw ConfigError("bad address '" + text + "'");
  hp.port = static_cast<std::uint16_t>(p);
  return hp;
}

namespace {

class Session : public std::enable_shared_from_this<Session> {
 public:
  Session(tcp::socket socket, Endpoint& endpoint, std::size_t capacity)
      : ws_(std::move(socket)), endpoint_(endpoint), outbox_(std::make_shared<Outbox>(capacity)) {}

  void run() {
    net::dispatch(ws_.get_executor(), [self = shared_from_this()] { self->accept(); });
  }

  void shutdown() {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      beast::error_code ec;
      beast::get_lowest_layer(self->ws_).socket().close(ec);
    });
  }

 private:
  void accept() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->id_ = self->endpoint_.open(self->outbox_);
      self->opened_ = true;
      std::weak_ptr<Session> weak = self;
      self->outbox_->set_notify([weak] {
        if (auto s = weak.lock()) net::post(s->ws_.get_executor(), [s] { s->pump(); });
      });
      self->read();
      self->pump();
    });
  }

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->finish();
      self->endpoint_.receive(self->id_, beast::buffers_to_string(self->buffer_.data()));
      self->buffer_.consume(self->buffer_.size());
      self->read();
    });
  }

  void pump() {
    if (writing_ || done_) return;
    auto m = outbox_->pop();
    if (!m) {
      if (outbox_->closing() && !closing_) {
        closing_ = true;
        ws_.async_close(websocket::close_code::policy_error, [self = shared_from_this()](beast::error_code) {});
      }
      return;
    }
    writing_ = true;
    current_ = *m;
    ws_.text(true);
    ws_.async_write(net::buffer(*current_), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->writing_ = false;
      self->current_.reset();
      if (ec) return self->finish();
      self->pump();
    });
  }

  void finish() {
    if (done_) return;
    done_ = true;
    outbox_->set_notify(nullptr);
    if (opened_) endpoint_.close(id_);
  }

  websocket::stream<beast::tcp_stream> ws_;
  Endpoint& endpoint_;
  std::shared_ptr<Outbox> outbox_;
  beast::flat_buffer buffer_;
  Message current_;
  Endpoint::ClientId id_ = 0;
  bool opened_ = false, writing_ = false, closing_ = false, done_ = false;
};

}  // namespace

struct WsServer::Impl {
  Endpoint& endpoint;
  std::size_t capacity;
  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::thread thread;
  std::mutex sessions_mutex;
  std::vector<std::weak_ptr<Session>> sessions;
  std::atomic<bool> stopped{false};

  Impl(Endpoint& e, std::size_t cap) : endpoint(e), capacity(cap) {}

  void accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      auto s = std::make_shared<Session>(std::move(socket), endpoint, capacity);
      {
        std::lock_guard lock(sessions_mutex);
        sessions.push_back(s);
      }
      s->run();
      accept();
    });
  }
};

WsServer::WsServer(Endpoint& endpoint, const HostPort& bind, std::size_t outbox_capacity)
    : impl_(std::make_unique<Impl>(endpoint, outbox_capacity)) {
  beast::error_code ec;
  const auto address = net::ip::make_address(bind.host, ec);
  if (ec) throw NetworkError("bad bind address '" + bind.host + "': " + ec.message());
  const tcp::endpoint ep(address, bind.port);
  auto& acc = impl_->acceptor;
  acc.open(ep.protocol(), ec);
  if (!ec) acc.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) acc.bind(ep, ec);
  if (!ec) acc.listen(net::socket_base::max_listen_connections, ec);
  if (ec) throw NetworkError("cannot bind " + bind.host + ":" + std::to_string(bind.port) + ": " + ec.message());
  impl_->accept();
  impl_->thread = std::thread([this] { impl_->ioc.run(); });
}

WsServer::~WsServer() { stop(); }

std::uint16_t WsServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void WsServer::stop() {
  if (impl_->stopped.exchange(true)) return;
  net::post(impl_->ioc, [this] {
    beast::error_code ec;
    impl_->acceptor.close(ec);
    std::lock_guard lock(impl_->sessions_mutex);
    for (auto& w : impl_->sessions)
      if (auto s = w.lock()) s->shutdown();
  });
  // Let the closes run, then stop the loop.
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  impl_->ioc.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

struct WsClient::Impl {
  net::io_context ioc;
  websocket::stream<beast::tcp_stream> ws{net::make_strand(ioc)};
  beast::flat_buffer buffer;
  std::thread thread;

  std::mutex mutex;
  std::condition_variable cv;
  std::deque<std::string> inbox;
  std::deque<std::string> outgoing;
  bool writing = false;
  std::atomic<bool> open{false};
  std::mutex close_mutex;

  void read() {
    ws.async_read(buffer, [this](beast::error_code ec, std::size_t) {
      if (ec) {
        open = false;
        cv.notify_all();
        return;
      }
      {
        std::lock_guard lock(mutex);
        inbox.push_back(beast::buffers_to_string(buffer.data()));
      }
      buffer.consume(buffer.size());
      cv.notify_all();
      read();
    });
  }

  void write() {
    if (writing || outgoing.empty()) return;
    writing = true;
    ws.text(true);
    ws.async_write(net::buffer(outgoing.front()), [this](beast::error_code ec, std::size_t) {
      writing = false;
      outgoing.pop_front();
      if (ec) {
        open = false;
        return;
      }
      write();
    });
  }
};

WsClient::WsClient(const HostPort& server, std::chrono::milliseconds timeout) : impl_(std::make_unique<Impl>()) {
  try {
    tcp::resolver resolver(impl_->ioc);
    const auto results = resolver.resolve(server.host, std::to_string(server.port));
    auto& layer = beast::get_lowest_layer(impl_->ws);
    layer.expires_after(timeout);
    layer.connect(results);
    layer.expires_never();
    impl_->ws.handshake(server.host + ":" + std::to_string(server.port), "/");
  } catch (const boost::system::system_error& e) {
    throw NetworkError("cannot connect to " + server.host + ":" + std::to_string(server.port) + ": " + e.what());
  }
  impl_->open = true;
  impl_->read();
  impl_->thread = std::thread([this] { impl_->ioc.run(); });
}

WsClient::~WsClient() {
  close();
}

void WsClient::send(const std::string& text) {
  if (!impl_->open) throw NetworkError("connection closed");
  net::post(impl_->ws.get_executor(), [this, text] {
    impl_->outgoing.push_back(text);
    impl_->write();
  });
}

std::optional<std::string> WsClient::receive(std::chrono::milliseconds timeout) {
  std::unique_lock lock(impl_->mutex);
  impl_->cv.wait_for(lock, timeout, [this] { return !impl_->inbox.empty() || !impl_->open; });
  if (impl_->inbox.empty()) return std::nullopt;
  std::string m = std::move(impl_->inbox.front());
  impl_->inbox.pop_front();
  return m;
}

Envelope WsClient::wait_for(const std::function<bool(const Envelope&)>& match, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw NetworkError("timed out waiting for a message");
    auto m = receive(left);
    if (!m) {
      if (!connected()) throw NetworkError("connection closed");
      continue;
    }
    Envelope e = decode(*m);
    if (match(e)) return e;
  }
}

bool WsClient::connected() const { return impl_->open; }

void WsClient::close() {
  std::lock_guard guard(impl_->close_mutex);
  if (!impl_->thread.joinable()) return;
  net::post(impl_->ws.get_executor(), [this] {
    if (!impl_->open) return;
    impl_->ws.async_close(websocket::close_code::normal, [](beast::error_code) {});
  });
  // Give the close handshake a moment before tearing the loop down.
  for (int i = 0; i < 50 && impl_->open; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(2));
  impl_->ioc.stop();
  impl_->thread.join();
  impl_->open = false;
}

}  // namespace scaletwin
