"""Command line entry point: ``canforge <subcommand> ...``."""
import argparse
import logging
import sys

from . import data, generation, models, trainer


def cmd_prepare_data(args):
    manifest = data.load_manifest(args.data, manifest_csv=args.manifest)
    width = max(len(s) for s in manifest.counts)
    for style in sorted(manifest.counts, key=manifest.vocabulary.index_of):
        print(f"{style:<{width}}  {manifest.counts[style]:>7}")
    print(f"{'entries':<{width}}  {len(manifest):>7}")
    print(f"{'samples':<{width}}  {manifest.num_samples:>7}  (entries x {data.NUM_CROPS} crops)")
    if manifest.skipped:
        print(f"{'skipped':<{width}}  {len(manifest.skipped):>7}")
    return 0


def cmd_describe_model(args):
    spec = models.ModelSpec.for_variant(args.variant)
    g = models.build_generator(spec)
    d = models.build_discriminator(spec)
    print(models.parameter_census(g).format_table("Generator"))
    print()
    print(models.parameter_census(d).format_table("Discriminator"))
    print()
    print(f"Total params: {models.count_parameters(g) + models.count_parameters(d):,}")
    if args.show_spec:
        print()
        print(spec.to_text(), end="")
    return 0


def cmd_train(args):
    config = trainer.TrainingConfig(
        variant=args.variant,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        beta1=args.beta1,
        beta2=args.beta2,
        seed=args.seed,
        checkpoint_every=args.checkpoint_every,
        output_dir=args.out,
        workers=args.workers,
    )
    manifest = data.load_manifest(args.data, manifest_csv=args.manifest)
    result = trainer.train(config, manifest, resume_from=args.resume)
    report = trainer.divergence_monitor(result.history) if len(result.history) >= 2 else None
    if report is not None:
        for flag in report.flags:
            print(f"warning: {flag.message}", file=sys.stderr)
    return 0


def cmd_generate(args):
    grid = generation.parse_grid(args.grid) if args.grid else None
    style = None
    if args.style:
        style = args.style.split(",") if "," in args.style else args.style
    request = generation.GenerationRequest(args.checkpoint, args.count, args.seed, style, grid)
    collage = generation.generate_collage(request)
    generation.save_png(collage, args.out)
    return 0


def cmd_export_curves(args):
    series = generation.export_curves(args.log, args.out, args.plot)
    print(f"{len(series.epochs)} epochs exported")
    return 0


def build_parser():
    defaults = trainer.TrainingConfig()
    parser = argparse.ArgumentParser(prog="canforge", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-data", help="validate a corpus and print per-style counts")
    p.add_argument("--data", required=True, help="corpus root with one directory per style")
    p.add_argument("--manifest", help="optional path,style CSV overriding the directory scan")
    p.set_defaults(func=cmd_prepare_data)

    p = sub.add_parser("describe-model", help="print the layer/parameter table of a variant")
    p.add_argument("--variant", choices=models.VARIANTS, default="dcgan")
    p.add_argument("--show-spec", action="store_true")
    p.set_defaults(func=cmd_describe_model)

    p = sub.add_parser("train", help="train a dcgan, can or ccan model")
    p.add_argument("--variant", choices=models.VARIANTS, default="dcgan")
    p.add_argument("--data", required=True)
    p.add_argument("--manifest")
    p.add_argument("--epochs", type=int, default=defaults.epochs)
    p.add_argument("--batch-size", type=int, default=defaults.batch_size)
    p.add_argument("--lr", type=float, default=defaults.lr)
    p.add_argument("--beta1", type=float, default=defaults.beta1)
    p.add_argument("--beta2", type=float, default=defaults.beta2)
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--checkpoint-every", type=int, default=defaults.checkpoint_every)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="sample a collage from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--count", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--style", help="style name or index; comma-separated for one style per row (ccan only)")
    p.add_argument("--grid", help="RxC layout, rows*cols must equal --count")
    p.add_argument("--out", required=True, help="output PNG")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("export-curves", help="turn a loss log into plot-ready series")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True, help=".json for data, .png/.svg/.pdf for a rendered plot")
    p.add_argument("--plot", help="additionally render a plot to this path")
    p.set_defaults(func=cmd_export_curves)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (data.DataError, generation.GenerationError, generation.CurveError,
            trainer.TrainingError, models.ModelSpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
