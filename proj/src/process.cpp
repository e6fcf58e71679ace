#include "videoeval/process.hpp"

#include <csignal>
#include <future>
#include <mutex>
#include <stdexcept>

#include <boost/asio/buffer.hpp>
#include <boost/asio/io_context.hpp>
#include <boost/process.hpp>

namespace bp = boost::process;

namespace videoeval {

ProcessResult run_process(const std::vector<std::string>& argv, std::string_view stdin_data) {
  if (argv.empty()) throw std::runtime_error("empty command");
  // A hook that exits before draining stdin must not kill us with SIGPIPE.
  static std::once_flag ignore_sigpipe;
  std::call_once(ignore_sigpipe, [] { std::signal(SIGPIPE, SIG_IGN); });

  boost::filesystem::path exe = argv.front();
  if (argv.front().find('/') == std::string::npos) {
    exe = bp::search_path(argv.front());
    if (exe.empty()) throw std::runtime_error("command not found: " + argv.front());
  }
  const std::vector<std::string> args(argv.begin() + 1, argv.end());

  boost::asio::io_context io;
  std::future<std::string> out;
  const std::string input(stdin_data);
  try {
    bp::child child(exe, bp::args(args), bp::std_in < boost::asio::buffer(input), bp::std_out > out,
                    bp::std_err > bp::null, io);
    io.run();
    child.wait();
    return ProcessResult{child.exit_code(), out.get()};
  } catch (const bp::process_error& e) {
    throw std::runtime_error(std::string("cannot run ") + argv.front() + ": " + e.what());
  }
}

}  // namespace videoeval
