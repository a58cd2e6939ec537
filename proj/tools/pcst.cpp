#include <pcst/cli.hpp>

int main(int argc, char** argv) { return pcst::cli::run(argc, argv); }
