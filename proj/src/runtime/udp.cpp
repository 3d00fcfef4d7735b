#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <stdexcept>

#include "minos/runtime.hpp"

namespace minos {

namespace {

uint32_t resolve_ipv4(const std::string& host) {
  in_addr addr{};
  const std::string h = host == "localhost" ? "127.0.0.1" : host;
  if (inet_pton(AF_INET, h.c_str(), &addr) != 1) {
    throw std::invalid_argument("not an IPv4 address: " + host);
  }
  return ntohl(addr.s_addr);
}

sockaddr_in make_address(uint32_t host, uint16_t port) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_addr.s_addr = htonl(host);
  sa.sin_port = htons(port);
  return sa;
}

int open_socket(uint32_t host, uint16_t port) {
  int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd < 0) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
  int size = 4 << 20;
  ::setsockopt(fd, SOL_SOCKET, SO_RCVBUF, &size, sizeof(size));
  ::setsockopt(fd, SOL_SOCKET, SO_SNDBUF, &size, sizeof(size));
  sockaddr_in sa = make_address(host, port);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0) {
    const int err = errno;
    ::close(fd);
    throw std::runtime_error("bind port " + std::to_string(port) + ": " + std::strerror(err));
  }
  ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK);
  return fd;
}

}  // namespace

uint64_t UdpTransport::pack_address(uint32_t ipv4_host_order, uint16_t port) {
  return (static_cast<uint64_t>(ipv4_host_order) << 16) | port;
}

UdpTransport::UdpTransport(const std::string& host, uint16_t base_port, uint32_t queues) {
  const uint32_t ip = resolve_ipv4(host);
  try {
    for (uint32_t i = 0; i < queues; ++i) {
      fds_.push_back(open_socket(ip, static_cast<uint16_t>(base_port + i)));
    }
  } catch (...) {
    for (int fd : fds_) ::close(fd);
    throw;
  }
}

UdpTransport::~UdpTransport() {
  for (int fd : fds_) ::close(fd);
}

size_t UdpTransport::receive(uint32_t queue, std::vector<Frame>& out, size_t max) {
  size_t got = 0;
  uint8_t buf[65536];
  while (got < max) {
    sockaddr_in from{};
    socklen_t len = sizeof(from);
    ssize_t r = ::recvfrom(fds_[queue], buf, sizeof(buf), MSG_DONTWAIT,
                           reinterpret_cast<sockaddr*>(&from), &len);
    if (r < 0) break;
    Frame f;
    f.data.assign(buf, buf + r);
    f.client = pack_address(ntohl(from.sin_addr.s_addr), ntohs(from.sin_port));
    out.push_back(std::move(f));
    ++got;
  }
  return got;
}

void UdpTransport::send(uint32_t core, std::vector<Frame>& frames) {
  const int fd = fds_[core % fds_.size()];
  for (const Frame& f : frames) {
    sockaddr_in to = make_address(static_cast<uint32_t>(f.client >> 16),
                                  static_cast<uint16_t>(f.client & 0xffff));
    for (int attempt = 0; attempt < 1000; ++attempt) {
      if (::sendto(fd, f.data.data(), f.data.size(), 0, reinterpret_cast<sockaddr*>(&to),
                   sizeof(to)) >= 0 ||
          (errno != EAGAIN && errno != EWOULDBLOCK)) {
        break;
      }
      std::this_thread::yield();
    }
  }
  frames.clear();
}

UdpClient::UdpClient(const std::string& server_host, uint16_t base_port)
    : host_(resolve_ipv4(server_host)), base_port_(base_port) {
  fd_ = open_socket(resolve_ipv4("127.0.0.1") == host_ ? host_ : 0, 0);
}

UdpClient::~UdpClient() {
  if (fd_ >= 0) ::close(fd_);
}

bool UdpClient::send(uint32_t queue, std::span<const uint8_t> datagram) {
  sockaddr_in to = make_address(host_, static_cast<uint16_t>(base_port_ + queue));
  for (int attempt = 0; attempt < 1000; ++attempt) {
    if (::sendto(fd_, datagram.data(), datagram.size(), 0, reinterpret_cast<sockaddr*>(&to),
                 sizeof(to)) >= 0) {
      return true;
    }
    if (errno != EAGAIN && errno != EWOULDBLOCK) return false;
    std::this_thread::yield();
  }
  return false;
}

bool UdpClient::receive(std::vector<uint8_t>& out, int timeout_us) {
  out.resize(65536);
  ssize_t r = ::recv(fd_, out.data(), out.size(), MSG_DONTWAIT);
  if (r < 0 && timeout_us > 0) {
    pollfd p{fd_, POLLIN, 0};
    if (::poll(&p, 1, std::max(1, timeout_us / 1000)) > 0) {
      r = ::recv(fd_, out.data(), out.size(), MSG_DONTWAIT);
    }
  }
  if (r < 0) {
    out.clear();
    return false;
  }
  out.resize(static_cast<size_t>(r));
  return true;
}

}  // namespace minos
