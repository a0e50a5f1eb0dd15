use clap::Parser;

fn main() -> anyhow::Result<()> {
    feeder_gateway::cli::execute(feeder_gateway::cli::Cli::parse())
}
