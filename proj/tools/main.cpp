#include "mvbi/cli.hpp"

int main(int argc, char** argv) { return mvbi::cli::run(argc, argv); }
