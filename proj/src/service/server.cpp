#include "pumpsched/service/server.hpp"

#include "pumpsched/errors.hpp"
#include "pumpsched/workflows.hpp"

#include <boost/asio/dispatch.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <deque>
#include <iostream>
#include <thread>
#include <vector>

namespace pumpsched::service {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

constexpr auto kTickInterval = std::chrono::milliseconds(100);

// "/sessions/<id>/<suffix>" -> id, or empty.
std::string session_id(std::string_view target, std::string_view suffix)
{
    constexpr std::string_view prefix = "/sessions/";
    if (!target.starts_with(prefix)) return {};
    target.remove_prefix(prefix.size());
    const auto slash = target.find('/');
    if (slash == std::string_view::npos || target.substr(slash + 1) != suffix) return {};
    return std::string(target.substr(0, slash));
}

std::string_view path_of(std::string_view target)
{
    const auto q = target.find('?');
    return q == std::string_view::npos ? target : target.substr(0, q);
}

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

std::string_view target_of(const Request& req)
{
    const auto t = req.target();
    return {t.data(), t.size()};
}

Response make_response(const Request& req, http::status status, std::string body,
                       std::string_view content_type = "application/json")
{
    Response res{status, req.version()};
    res.set(http::field::server, "pumpsched/" + workflows::version());
    res.set(http::field::content_type, std::string(content_type));
    res.set(http::field::access_control_allow_origin, "*");
    res.keep_alive(req.keep_alive());
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
}

Response json_response(const Request& req, http::status status, const Json& j)
{
    return make_response(req, status, j.dump());
}

Response handle_request(SessionManager& manager, const Request& req)
{
    const auto path = path_of(target_of(req));
    if (req.method() == http::verb::options) {
        auto res = make_response(req, http::status::no_content, "");
        res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
        res.set(http::field::access_control_allow_headers, "Content-Type");
        return res;
    }
    if (path == "/health") {
        if (req.method() != http::verb::get) return json_response(req, http::status::method_not_allowed,
                                                                  error_message("method", "use GET"));
        return json_response(req, http::status::ok,
                             Json{{"v", kProtocolVersion},
                                  {"status", "ok"},
                                  {"version", workflows::version()},
                                  {"sessions", manager.size()}});
    }
    if (path == "/sessions") {
        if (req.method() == http::verb::get) return json_response(req, http::status::ok, manager.list());
        if (req.method() != http::verb::post) return json_response(req, http::status::method_not_allowed,
                                                                   error_message("method", "use GET or POST"));
        Json body = nullptr;
        if (!req.body().empty()) {
            try {
                body = Json::parse(req.body());
            } catch (const Json::exception& e) {
                return json_response(req, http::status::bad_request, error_message("bad_json", e.what()));
            }
        }
        try {
            return json_response(req, http::status::created, manager.create(body));
        } catch (const ValidationError& e) {
            auto err = error_message("invalid_scenario", e.what());
            err["issues"] = e.issues();
            return json_response(req, http::status::bad_request, err);
        } catch (const std::exception& e) {
            return json_response(req, http::status::bad_request, error_message("invalid_scenario", e.what()));
        }
    }
    if (const auto id = session_id(path, "export"); !id.empty()) {
        if (req.method() != http::verb::get) return json_response(req, http::status::method_not_allowed,
                                                                  error_message("method", "use GET"));
        auto session = manager.find(id);
        if (!session) return json_response(req, http::status::not_found,
                                           error_message("unknown_session", "no session '" + id + "'"));
        if (session->rows() == 0) return json_response(req, http::status::conflict,
                                                       error_message("empty_session", "session has no steps"));
        auto res = make_response(req, http::status::ok, session->export_csv(), "text/csv");
        res.set(http::field::content_disposition, "attachment; filename=\"session-" + id + ".csv\"");
        res.prepare_payload();
        return res;
    }
    return json_response(req, http::status::not_found,
                         error_message("not_found", "no route for " + std::string(path)));
}

void log_error(beast::error_code ec, const char* what)
{
    if (ec == net::error::operation_aborted || ec == websocket::error::closed || ec == http::error::end_of_stream)
        return;
    std::cerr << "serve: " << what << ": " << ec.message() << '\n';
}

class WsSession : public std::enable_shared_from_this<WsSession> {
public:
    WsSession(tcp::socket&& socket, SessionManager& manager, std::string id)
        : ws_(std::move(socket)), manager_(manager), id_(std::move(id))
    {
    }

    void run(Request req)
    {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
    }

    // Thread-safe: hops onto the stream's strand.
    void send(std::string text)
    {
        net::post(ws_.get_executor(), [self = shared_from_this(), text = std::move(text)]() mutable {
            self->queue_.push_back(std::move(text));
            if (self->queue_.size() == 1) self->write_next();
        });
    }

private:
    void on_accept(beast::error_code ec)
    {
        if (ec) return log_error(ec, "ws accept");
        auto session = manager_.find(id_);
        if (!session) {
            send(error_message("unknown_session", "no session '" + id_ + "'").dump());
            closing_ = true;
            return;
        }
        std::weak_ptr<WsSession> weak = shared_from_this();
        session->set_sink([weak](const std::string& text) {
            if (auto self = weak.lock()) self->send(text);
        });
        send(session->state_message().dump());
        read();
    }

    void read()
    {
        ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
    }

    void on_read(beast::error_code ec, std::size_t)
    {
        if (ec) return log_error(ec, "ws read");
        const std::string text = beast::buffers_to_string(buffer_.data());
        buffer_.consume(buffer_.size());
        for (const auto& m : manager_.handle(id_, text)) send(m.dump());
        read();
    }

    void write_next()
    {
        ws_.text(true);
        ws_.async_write(net::buffer(queue_.front()),
                        beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
    }

    void on_write(beast::error_code ec, std::size_t)
    {
        if (ec) return log_error(ec, "ws write");
        queue_.pop_front();
        if (!queue_.empty()) {
            write_next();
        } else if (closing_) {
            ws_.async_close(websocket::close_code::policy_error,
                            [self = shared_from_this()](beast::error_code) {});
        }
    }

    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buffer_;
    SessionManager& manager_;
    std::string id_;
    std::deque<std::string> queue_;
    bool closing_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
public:
    HttpSession(tcp::socket&& socket, SessionManager& manager) : stream_(std::move(socket)), manager_(manager) {}

    void run()
    {
        net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpSession::read, shared_from_this()));
    }

private:
    void read()
    {
        parser_.emplace();
        parser_->body_limit(1 << 20);
        stream_.expires_after(std::chrono::seconds(30));
        http::async_read(stream_, buffer_, *parser_,
                         beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
    }

    void on_read(beast::error_code ec, std::size_t)
    {
        if (ec == http::error::end_of_stream) {
            beast::error_code ignored;
            stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
            return;
        }
        if (ec) return log_error(ec, "http read");
        Request req = parser_->release();
        if (websocket::is_upgrade(req)) {
            const auto id = session_id(path_of(target_of(req)), "stream");
            if (!id.empty()) {
                stream_.expires_never();
                std::make_shared<WsSession>(stream_.release_socket(), manager_, id)->run(std::move(req));
                return;
            }
        }
        auto res = std::make_shared<Response>(handle_request(manager_, req));
        http::async_write(stream_, *res,
                          [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
                              if (ec) return log_error(ec, "http write");
                              if (!res->keep_alive()) {
                                  beast::error_code ignored;
                                  self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
                                  return;
                              }
                              self->read();
                          });
    }

    beast::tcp_stream stream_;
    beast::flat_buffer buffer_;
    std::optional<http::request_parser<http::string_body>> parser_;
    SessionManager& manager_;
};

} // namespace

struct Server::Impl {
    Impl(SessionManager& m, int threads) : manager(m), ioc(std::max(1, threads)), acceptor(ioc), ticker(ioc),
                                           thread_count(std::max(1, threads)) {}

    void accept()
    {
        acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
            if (ec) {
                if (ec != net::error::operation_aborted) log_error(ec, "accept");
                if (!acceptor.is_open()) return;
            } else {
                std::make_shared<HttpSession>(std::move(socket), manager)->run();
            }
            accept();
        });
    }

    void tick()
    {
        ticker.expires_after(kTickInterval);
        ticker.async_wait([this](beast::error_code ec) {
            if (ec) return;
            manager.tick();
            tick();
        });
    }

    SessionManager& manager;
    net::io_context ioc;
    tcp::acceptor acceptor;
    net::steady_timer ticker;
    int thread_count;
    std::vector<std::thread> threads;
    std::atomic<bool> stopped{false};
};

Server::Server(SessionManager& manager, const std::string& address, unsigned short port, int threads)
    : impl_(std::make_unique<Impl>(manager, threads))
{
    beast::error_code ec;
    const auto addr = net::ip::make_address(address, ec);
    if (ec) throw std::runtime_error("bad listen address '" + address + "': " + ec.message());
    const tcp::endpoint ep{addr, port};
    auto& acc = impl_->acceptor;
    acc.open(ep.protocol(), ec);
    if (!ec) acc.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acc.bind(ep, ec);
    if (!ec) acc.listen(net::socket_base::max_listen_connections, ec);
    if (ec) {
        throw std::runtime_error("cannot listen on " + address + ":" + std::to_string(port) + ": " + ec.message());
    }
}

Server::~Server() { stop(); }

unsigned short Server::port() const noexcept { return impl_->acceptor.local_endpoint().port(); }

void Server::start()
{
    impl_->accept();
    impl_->tick();
    for (int i = 0; i < impl_->thread_count; ++i) impl_->threads.emplace_back([this] { impl_->ioc.run(); });
}

void Server::run_until_signal()
{
    net::signal_set signals(impl_->ioc, SIGINT, SIGTERM);
    signals.async_wait([this](beast::error_code, int) { impl_->ioc.stop(); });
    start();
    for (auto& t : impl_->threads) t.join();
    impl_->threads.clear();
    stop();
}

void Server::stop()
{
    if (impl_->stopped.exchange(true)) return;
    impl_->ioc.stop();
    for (auto& t : impl_->threads) {
        if (t.joinable()) t.join();
    }
    impl_->threads.clear();
    beast::error_code ignored;
    impl_->acceptor.close(ignored);
}

} // namespace pumpsched::service
