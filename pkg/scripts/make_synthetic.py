"""Write a synthetic sales corpus plus knowledge files and a rate table.

    python3 scripts/make_synthetic.py --out data/synth --n 5000 --messy
"""
import argparse
import json

from assetvalue.dataset import AssetClass
from assetvalue.synthetic import PriceModel, generate_corpus


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--asset-class", default="DomainName", choices=[c.value for c in AssetClass])
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--messy", action="store_true", help="add records that ingestion should drop")
    args = p.parse_args()
    corpus = generate_corpus(args.n, AssetClass(args.asset_class), args.seed,
                             PriceModel(noise=args.noise), messy=args.messy)
    paths = corpus.write(args.out)
    print(json.dumps(paths, indent=2))


if __name__ == "__main__":
    main()
