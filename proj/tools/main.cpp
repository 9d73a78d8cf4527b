#include <gslogit/cli.hpp>

int main(int argc, char** argv) { return gslogit::cli::run(argc, argv); }
