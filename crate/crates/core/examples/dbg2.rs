//! Scratch: inspect the mla_moe disagg point composition.
use disagg_core::enumerate::SearchSpace;
use disagg_core::pareto::*;
use disagg_core::perfmodel::*;
use disagg_core::simulate::*;
use disagg_core::workload::*;

fn main() {
    let text = std::fs::read_to_string("configs/mla_moe.json").unwrap();
    let c = load_config(&text).unwrap();
    let space = SearchSpace::from_config(&c.model, &c.hardware, &c.search);
    let d = build_disagg_frontier(&c.model, &c.hardware, &space, &c.sla, &c.traffic, 4096).unwrap();
    let (_, osl) = nominal_lengths(&c.traffic);
    let relaxed = 0.064;
    for p in d.frontier.points().iter().filter(|p| p.interactivity >= 1.0/relaxed) {
        if let Provenance::Disagg(dp) = &p.provenance {
            let rp = dp.prefill.per_gpu_request_rate;
            let rd = dp.decode.per_gpu_token_rate / (osl - 1) as f64;
            let fin = dp.num_prefill_gpus as f64 * rp;
            let fout = dp.num_decode_gpus as f64 * rd;
            println!("pt: dec {} b{} ttl {:.5} | pre {} b{} ftl {:.3} | Np {} Nd {} alpha {} | in {:.2} out {:.2} surplus {}",
                dp.decode.mapping.label(), dp.decode.batch, dp.decode.latency,
                dp.prefill.mapping.label(), dp.prefill.batch, dp.prefill.latency,
                dp.num_prefill_gpus, dp.num_decode_gpus, dp.alpha, fin, fout, fin >= fout);
        }
    }
    // The surplus pick: decode b? iteration profile around designed occupancy:
    let dp = d.frontier.points().iter().filter(|p| p.interactivity >= 1.0/relaxed)
        .filter_map(|p| match &p.provenance { Provenance::Disagg(d) => Some((**d).clone()), _ => None })
        .filter(|dp| {
            let rp = dp.prefill.per_gpu_request_rate;
            let rd = dp.decode.per_gpu_token_rate/(osl-1) as f64;
            dp.num_prefill_gpus as f64*rp >= dp.num_decode_gpus as f64*rd })
        .max_by(|a,b| a.overall_tokens_per_sec_per_gpu.total_cmp(&b.overall_tokens_per_sec_per_gpu)).unwrap();
    println!("picked: decode b={} gd={} instances={}", dp.decode.batch, dp.decode.mapping.gpus(), dp.num_decode_gpus/(dp.decode.mapping.gpus() as u64));
    for act in [dp.decode.batch/4, dp.decode.batch/2, dp.decode.batch*3/4, dp.decode.batch] {
        let mix = BatchMix::decode_only(act as f64, 16384.0+1024.0);
        let it = iteration_time(&c.model, &c.hardware, &dp.decode.mapping, &mix).latency();
        println!("  iter(active={act}) = {:.5} -> completions/s {:.2}", it, act as f64/(it*(osl-1) as f64));
    }
    println!("inflow {:.3} req/s", dp.num_prefill_gpus as f64 * dp.prefill.per_gpu_request_rate);
    // prefill lump structure
    println!("prefill: instances={} batch={} ftl={:.3}", dp.num_prefill_gpus/(dp.prefill.mapping.gpus() as u64), dp.prefill.batch, dp.prefill.latency);
}
