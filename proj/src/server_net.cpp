// WebSocket and static-file front end for trial sessions.
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "adf/server.hpp"

namespace adf {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

std::string mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".csv") return "text/csv";
  return "application/octet-stream";
}

void send_response(tcp::socket& sock, const http::request<http::string_body>& req, http::status status,
                   std::string body, const std::string& type) {
  http::response<http::string_body> res{status, req.version()};
  res.set(http::field::server, "adf-trial-server");
  res.set(http::field::content_type, type);
  res.keep_alive(false);
  res.body() = std::move(body);
  res.prepare_payload();
  beast::error_code ec;
  http::write(sock, res, ec);
}

void serve_file(tcp::socket& sock, const http::request<http::string_body>& req, const std::string& root) {
  if (req.method() != http::verb::get && req.method() != http::verb::head)
    return send_response(sock, req, http::status::bad_request, "unsupported method\n", "text/plain");
  std::string target(req.target());
  if (auto q = target.find('?'); q != std::string::npos) target.resize(q);
  if (root.empty() || target.empty() || target[0] != '/' || target.find("..") != std::string::npos)
    return send_response(sock, req, http::status::not_found, "not found\n", "text/plain");
  if (target.back() == '/') target += "index.html";
  const std::filesystem::path path = std::filesystem::path(root) / target.substr(1);
  std::ifstream in(path, std::ios::binary);
  if (!in || std::filesystem::is_directory(path))
    return send_response(sock, req, http::status::not_found, "not found\n", "text/plain");
  std::ostringstream body;
  body << in.rdbuf();
  send_response(sock, req, http::status::ok, body.str(), mime_type(path));
}

}  // namespace

struct TrialServer::Impl {
  ServerOptions options;
  net::io_context accept_ioc;
  tcp::acceptor acceptor{accept_ioc};
  std::unique_ptr<DemoWriter> recorder;
  std::atomic<bool> stopping{false};
  std::thread accept_thread;
  std::mutex conn_mu;
  std::vector<std::thread> connections;

  void accept_loop();
  void serve(net::io_context& ioc, tcp::socket sock);
  void run_websocket(net::io_context& ioc, tcp::socket sock, const http::request<http::string_body>& req);
};

void TrialServer::Impl::accept_loop() {
  auto ioc = std::make_shared<net::io_context>();
  auto sock = std::make_shared<tcp::socket>(*ioc);
  acceptor.async_accept(*sock, [this, ioc, sock](beast::error_code ec) {
    if (stopping.load()) return;
    if (!ec) {
      std::lock_guard lock(conn_mu);
      connections.emplace_back([this, ioc, sock] { serve(*ioc, std::move(*sock)); });
    }
    accept_loop();
  });
}

void TrialServer::Impl::serve(net::io_context& ioc, tcp::socket sock) {
  try {
    beast::flat_buffer buffer;
    http::request<http::string_body> req;
    http::read(sock, buffer, req);
    if (websocket::is_upgrade(req)) {
      run_websocket(ioc, std::move(sock), req);
    } else {
      serve_file(sock, req, options.web_root);
      beast::error_code ec;
      sock.shutdown(tcp::socket::shutdown_send, ec);
    }
  } catch (const std::exception&) {
    // Connection-level failures end only that connection.
  }
}

void TrialServer::Impl::run_websocket(net::io_context& ioc, tcp::socket sock,
                                      const http::request<http::string_body>& req) {
  websocket::stream<tcp::socket> ws(std::move(sock));
  ws.accept(req);
  ws.text(true);

  std::atomic<bool> closed{false};
  auto send = [&](const std::string& text) {
    if (closed.load()) return;
    beast::error_code ec;
    ws.write(net::buffer(text), ec);
    if (ec) closed = true;
  };
  Session session(options.world, send, recorder.get());

  beast::flat_buffer inbound;
  std::function<void()> arm_read = [&] {
    ws.async_read(inbound, [&](beast::error_code ec, std::size_t) {
      if (ec) {
        closed = true;
        return;
      }
      const std::string text = beast::buffers_to_string(inbound.data());
      inbound.consume(inbound.size());
      try {
        session.enqueue(parse_client_message(text));
      } catch (const Error& e) {
        send(error_message(0, 0, e.code(), e.what()));
      }
      arm_read();
    });
  };
  arm_read();

  std::atomic<bool> stop{false};
  auto poll = [&] {
    ioc.poll();
    if (ioc.stopped()) ioc.restart();
    if (closed.load() || stopping.load()) stop = true;
  };
  run_session_loop(session, options.loop, stop, poll);
  session.disconnect();
  if (!closed.load()) {
    beast::error_code ec;
    ws.close(websocket::close_code::going_away, ec);
  }
}

TrialServer::TrialServer(ServerOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->options = std::move(options);
}

TrialServer::~TrialServer() { stop(); }

void TrialServer::start() {
  auto& im = *impl_;
  if (!im.options.record_path.empty()) im.recorder = std::make_unique<DemoWriter>(im.options.record_path);
  beast::error_code ec;
  const auto address = net::ip::make_address(im.options.address, ec);
  if (ec) throw Error(ErrorCode::InvalidConfig, "bad listen address " + im.options.address);
  const tcp::endpoint endpoint{address, im.options.port};
  im.acceptor.open(endpoint.protocol(), ec);
  if (!ec) im.acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) im.acceptor.bind(endpoint, ec);
  if (!ec) im.acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot listen on port " + std::to_string(im.options.port) + ": " + ec.message());
  port_ = im.acceptor.local_endpoint().port();
  im.accept_loop();
  im.accept_thread = std::thread([&im] { im.accept_ioc.run(); });
}

void TrialServer::stop() {
  auto& im = *impl_;
  if (im.stopping.exchange(true)) return;
  net::post(im.accept_ioc, [&im] {
    beast::error_code ec;
    im.acceptor.close(ec);
  });
  im.accept_ioc.stop();
  if (im.accept_thread.joinable()) im.accept_thread.join();
  std::vector<std::thread> conns;
  {
    std::lock_guard lock(im.conn_mu);
    conns.swap(im.connections);
  }
  for (auto& t : conns)
    if (t.joinable()) t.join();
}

}  // namespace adf
