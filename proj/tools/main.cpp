#include "cli.hpp"

int main(int argc, char** argv) { return spcn::cli::run(argc, argv); }
