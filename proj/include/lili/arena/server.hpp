#pragma once

// TCP server for arena sessions: newline-delimited JSON in both directions,
// one Session per connection, all connections on one io_context.

#include <atomic>
#include <chrono>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include <boost/asio.hpp>

#include "lili/arena/session.hpp"

namespace lili::arena {

namespace asio = boost::asio;
using tcp = asio::ip::tcp;

/// Writes a finished session's interaction CSV and JSON summary under `dir`.
inline void persist_session(const Session& s, const EnvSpec& spec, const std::filesystem::path& dir) {
    if (dir.empty()) return;
    const auto d = dir / ("session_" + s.id());
    std::filesystem::create_directories(d);
    cli::write_text(d / "interactions.csv", session_csv(s, spec));
    cli::write_text(d / "summary.json", session_summary(s, spec.id).dump(2) + "\n");
}

class Connection : public std::enable_shared_from_this<Connection> {
public:
    Connection(tcp::socket sock, std::string id, std::shared_ptr<const ArenaModel> model, ArenaOptions opt,
               std::filesystem::path log_dir)
        : sock_(std::move(sock)), timer_(sock_.get_executor()), session_(std::move(id), model, opt),
          spec_(model->config.env), log_dir_(std::move(log_dir)), opt_(opt) {}

    void start() {
        flush();
        read();
        if (opt_.tick_ms > 0) tick();
    }

private:
    void read() {
        auto self = shared_from_this();
        asio::async_read_until(sock_, buf_, '\n', [this, self](boost::system::error_code ec, std::size_t n) {
            if (ec) return close();
            std::string line(asio::buffers_begin(buf_.data()), asio::buffers_begin(buf_.data()) + static_cast<std::ptrdiff_t>(n));
            buf_.consume(n);
            while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
            if (!line.empty()) session_.on_line(line);
            flush();
            read();
        });
    }

    void tick() {
        auto self = shared_from_this();
        timer_.expires_after(std::chrono::milliseconds(opt_.tick_ms));
        timer_.async_wait([this, self](boost::system::error_code ec) {
            if (ec || closed_) return;
            session_.on_tick();
            flush();
            tick();
        });
    }

    void flush() {
        for (auto& m : session_.drain()) out_.push_back(m.dump() + "\n");
        if (!writing_) write();
    }

    void write() {
        if (out_.empty() || closed_) {
            writing_ = false;
            return;
        }
        writing_ = true;
        auto self = shared_from_this();
        asio::async_write(sock_, asio::buffer(out_.front()), [this, self](boost::system::error_code ec, std::size_t) {
            if (ec) return close();
            out_.pop_front();
            write();
        });
    }

    // Completed interactions are kept; a partial one is never logged.
    void close() {
        if (closed_) return;
        closed_ = true;
        timer_.cancel();
        boost::system::error_code ignored;
        sock_.close(ignored);
        try {
            persist_session(session_, spec_, log_dir_);
        } catch (const std::exception&) {
        }
    }

    tcp::socket sock_;
    asio::steady_timer timer_;
    asio::streambuf buf_;
    Session session_;
    EnvSpec spec_;
    std::filesystem::path log_dir_;
    ArenaOptions opt_;
    std::deque<std::string> out_;
    bool writing_ = false;
    bool closed_ = false;
};

class Server {
public:
    Server(asio::io_context& io, const tcp::endpoint& at, std::shared_ptr<const ArenaModel> model, ArenaOptions opt,
           std::filesystem::path log_dir)
        : acceptor_(io, at), model_(std::move(model)), opt_(opt), log_dir_(std::move(log_dir)) {
        accept();
    }

    [[nodiscard]] unsigned short port() const { return acceptor_.local_endpoint().port(); }
    void stop() {
        boost::system::error_code ignored;
        acceptor_.close(ignored);
    }

private:
    void accept() {
        acceptor_.async_accept([this](boost::system::error_code ec, tcp::socket sock) {
            if (ec) return;
            std::make_shared<Connection>(std::move(sock), std::to_string(++count_), model_, opt_, log_dir_)->start();
            accept();
        });
    }

    tcp::acceptor acceptor_;
    std::shared_ptr<const ArenaModel> model_;
    ArenaOptions opt_;
    std::filesystem::path log_dir_;
    std::size_t count_ = 0;
};

}  // namespace lili::arena
