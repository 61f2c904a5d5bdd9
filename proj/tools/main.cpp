#include "ctxpara/cli.hpp"

int main(int argc, char** argv) { return ctxpara::cli::dispatch(argc, argv); }
