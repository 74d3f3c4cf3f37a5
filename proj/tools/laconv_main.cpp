#include "laconv/cli.hpp"

int main(int argc, char** argv) { return laconv::cli::run(argc, argv); }
