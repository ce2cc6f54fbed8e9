"""Writes the synthetic fixture tree and the scripted rule table."""
import json
import pathlib

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIX = ROOT / "fixtures"
SCRIPTS = ROOT / "scripts"


def dump(path, doc):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n")


def identity(ticker, name, ccy="USD", country="US"):
    return {"name": name, "ticker": ticker, "listing_currency": ccy, "country": country}


def fundamentals(ident, as_of, history, ebit, ic, debt, cash, shares, price, tax=0.20):
    return {
        "identity": ident,
        "as_of": as_of,
        "revenue_history": history,
        "ebit": ebit,
        "depreciation_amortization": 0.0,
        "effective_tax_rate": tax,
        "total_debt": debt,
        "cash_and_nonoperating": cash,
        "invested_capital": ic,
        "shares_outstanding": shares,
        "market_price": price,
    }


def peer(ticker, name, multiple, growth, margin, country):
    return {
        "identity": identity(ticker, name, "USD", country),
        "ev_to_ebitda": multiple,
        "revenue_growth": growth,
        "operating_margin": margin,
    }


BYD = identity("BYD", "BYD Company", "USD", "CN")
BYD_DATES = {
    "2024-10-14": 292.4,
    "2024-10-21": 301.8,
    "2024-10-28": 297.5,
    "2024-11-04": 305.2,
}
PEERS = {
    "peers": [
        peer("TSLA", "Tesla", 17.5, 0.02, 0.08, "US"),
        peer("NIO", "NIO", 10.2, 0.13, -0.25, "CN"),
        peer("XPEV", "XPeng", 11.0, 0.18, -0.30, "CN"),
        peer("LI", "Li Auto", 9.4, 0.16, 0.06, "CN"),
    ]
}


def news_item(headline, lede, body, source, url, ts, images=()):
    out = {
        "headline": headline,
        "first_paragraph": lede,
        "full_text": body,
        "source_name": source,
        "url": url,
        "published_at": ts,
    }
    if images:
        out["image_refs"] = [{"url": u, "caption": c} for u, c in images]
    return out


def byd_news(as_of):
    day = as_of
    items = [
        news_item(
            "BYD monthly deliveries climb on plug-in hybrid demand",
            "BYD delivered more vehicles than in any previous month, led by plug-in hybrids sold in China.",
            "BYD delivered more vehicles than in any previous month. Plug-in hybrids made up most of the "
            "gain while battery-only models grew more slowly. Exports rose for a third straight month.",
            "Auto Wire",
            "https://news.example.com/byd-deliveries",
            f"{day}T08:00:00Z",
            [("https://img.example.com/byd-deliveries.png", "Monthly deliveries")],
        ),
        news_item(
            "BYD to build assembly plant in Turkey",
            "The plant would let BYD supply European buyers from inside the customs union.",
            "BYD signed an agreement to build an assembly plant in Turkey. Production is planned to start "
            "within two years and would avoid the EU duty on vehicles shipped from China.",
            "Market Desk",
            "https://news.example.com/byd-turkey",
            f"{day}T06:30:00Z",
        ),
        news_item(
            "EU duties on Chinese electric cars take effect",
            "Additional duties on battery electric cars built in China now apply to imports into the EU.",
            "The European Union began collecting additional duties on battery electric cars built in China. "
            "BYD faces the lowest of the company-specific rates. Plug-in hybrids are not covered.",
            "Trade Journal",
            "https://news.example.com/eu-duties",
            f"{day}T05:00:00Z",
        ),
        news_item(
            "BYD sponsors European football tournament broadcast",
            "The carmaker's logo will appear on pitch-side boards during the tournament.",
            "Sponsorship details were not disclosed.",
            "Sports Daily",
            "https://news.example.com/byd-football",
            f"{day}T04:00:00Z",
        ),
        news_item(
            "Analysts debate how long the Chinese EV price war will last",
            "Several brokers expect discounting to continue into next year across the industry.",
            "Brokers differ on the length of the price war.",
            "Market Desk",
            "https://news.example.com/price-war",
            f"{day}T03:00:00Z",
        ),
    ]
    return items


POST_DATED = news_item(
    "BYD quarterly revenue overtakes Tesla",
    "BYD reported third-quarter revenue above Tesla's for the first time.",
    "BYD reported quarterly revenue above Tesla's for the first time, helped by hybrid volumes.",
    "Auto Wire",
    "https://news.example.com/byd-q3",
    "2024-10-30T09:00:00Z",
)


def write_byd():
    for as_of, price in BYD_DATES.items():
        d = FIX / "BYD"
        dump(
            d / f"{as_of}.json",
            fundamentals(BYD, as_of, [430000.0, 478000.0, 535000.0, 600000.0], 30000.0,
                         500000.0, 60000.0, 90000.0, 900.0, price),
        )
        dump(
            d / f"{as_of}.consensus.json",
            {
                "as_of": as_of,
                "revenue_growth_y1": 0.12,
                "revenue_growth_y2": 0.09,
                "operating_margin_fwd": 0.055,
                "analyst_count": 18,
                "median_target_price": 340.0,
            },
        )
        dump(d / f"{as_of}.comparables.json", PEERS)
        items = byd_news(as_of)
        if as_of == "2024-10-28":
            items.append(POST_DATED)
        dump(d / f"{as_of}.news.json", {"items": items})


BATCH = [
    ("NWND", "Northwind Motors", [210.0, 236.0, 265.0, 296.0], 14.8, 247.0, 40.0, 25.0, 1.1, 110.0),
    ("CTSO", "Contoso Cells", [80.0, 90.0, 101.0], 5.05, 84.0, 10.0, 12.0, 0.8, 40.0),
    ("FABR", "Fabrikam Drives", [1500.0, 1690.0, 1900.0], 96.0, 1580.0, 200.0, 150.0, 12.0, 38.0),
    ("GLBX", "Globex Transit", [640.0, 720.0, 805.0, 900.0], 46.0, 760.0, 90.0, 60.0, 4.0, 75.0),
    ("INIT", "Initech Power", [55.0, 62.0, 69.5], 3.4, 58.0, 4.0, 8.0, 0.5, 30.0),
    ("LMNA", "Lumina Mobility", [3000.0, 3380.0, 3790.0], 190.0, 3150.0, 500.0, 300.0, 20.0, 60.0),
    ("OCTA", "Octan Vehicles", [420.0, 470.0, 528.0], 27.0, 440.0, 30.0, 45.0, 3.0, 55.0),
    ("PRSM", "Prism Batteries", [150.0, 168.0, 189.0], 9.5, 158.0, 20.0, 10.0, 1.5, 40.0),
    ("QNTM", "Quantum Rail", [900.0, 1010.0, 1135.0], 56.0, 950.0, 100.0, 80.0, 6.0, 60.0),
]


def write_batch():
    for t, name, hist, ebit, ic, debt, cash, shares, price in BATCH:
        dump(FIX / t / "2024-11-04.json",
             fundamentals(identity(t, name), "2024-11-04", hist, ebit, ic, debt, cash, shares, price))
    (ROOT / "tickers.txt").write_text("\n".join(["BYD"] + [b[0] for b in BATCH]) + "\n")
    (ROOT / "byd_dates.txt").write_text("\n".join(BYD_DATES) + "\n")


STORY = [
    "The company has turned from a battery maker into one of the largest carmakers in the world, and the "
    "story we tell about its future is one of a maturing leader rather than a start-up. Sales are still "
    "growing, but the growth is now coming from a large base, and each additional point of growth needs "
    "factories, tooling and working capital. We expect revenue growth of 10% next year, easing to 7% a "
    "year for the remainder of the decade as domestic demand for electric and plug-in hybrid cars "
    "settles and the export business carries more of the load. In the long run we let growth converge "
    "to 4.4%, the riskfree rate, because no company can outgrow the economy forever.",
    "Profitability is the part of the story where we are most optimistic. The operating margin was 5% "
    "over the last year, held down by price cuts in the home market and by the costs of launching new "
    "models abroad. We assume the margin improves to 6.7% from the second year onwards and to 7% in "
    "steady state. That is still below the best established carmakers, but the company makes its own "
    "batteries, chips and many other components, and that vertical integration should protect margins "
    "once the price war in the domestic market runs its course. Scale in purchasing and manufacturing "
    "adds to the case.",
    "Reinvestment efficiency is measured by the sales to capital ratio, the revenue that each unit of new "
    "capital generates. We use 1.2 for the next five years, when the company is building plants in "
    "Hungary, Turkey, Brazil and Thailand, and 1.6 afterwards, when those plants are running and "
    "growth needs less new capital. The ratio matters because it decides how much of the operating "
    "profit is left as free cash flow. A lower ratio would mean that the same growth eats more of the "
    "cash, while a higher ratio would leave more for the owners of the business.",
    "Risk enters through the cost of capital. We start from the riskfree rate and add an equity risk "
    "premium for a mature market, which gives a cost of capital of a little over 8.5% a year that we "
    "hold flat across the forecast. One could argue for a higher rate because of the company's exposure "
    "to trade policy and to a single domestic market, and the sensitivity table shows how much that "
    "choice moves the value. We prefer to keep the discount rate simple and to express the political "
    "risk in the growth and margin assumptions, where its effect on the business is easier to see.",
    "The market agent compared our estimate with the trading price and argued that the gap reflects a "
    "market that is worried about tariffs and discounting rather than a different view of the long-term "
    "business. The consensus agent found analysts somewhat more bullish on near-term growth, but we "
    "kept our own growth path because the consensus numbers lean on a strong first year that may not "
    "last. The comparables agent found that the terminal multiple implied by our valuation sits below "
    "the peer group, which is consistent with a company that is larger and slower growing than most "
    "of its electric vehicle peers, and it saw no reason to change any input.",
    "The news agent read the recent coverage and kept the stories that bear on value. Monthly deliveries "
    "remain strong, led by plug-in hybrids, and the planned plant in Turkey would let the company serve "
    "European buyers from inside the customs union. The European duties on electric cars built in China "
    "are a headwind for exports, but they do not cover hybrids and the company faces one of the lower "
    "rates. On balance the news supports a slightly better first-year margin, which the news agent "
    "translated into a small change that the guardrails accepted.",
    "Putting the pieces together, the value we estimate per share is above the current market price, "
    "and the difference is wide enough to clear the band we require before acting. The recommendation "
    "is therefore to buy. The sensitivity table brackets the estimate across plausible terminal margins "
    "and costs of capital, and even the less favourable corners of that grid stay close to the market "
    "price. The main risks to the thesis are a longer price war at home, a broader set of trade barriers "
    "abroad and a slower ramp of the new plants, any of which would push the value toward the price.",
    "We also want to be clear about what this valuation does not claim. It does not predict the share "
    "price over the next few weeks, which will move with sentiment, flows and news that have little to "
    "do with cash flows. It does not assume that the company will win every market it enters. It is a "
    "statement that, under the story told here, the business is worth more than the market is paying for "
    "it, and that the story is plausible given what the company has already done. Investors who see a "
    "darker future for the industry should change the inputs and see where the value lands.",
    "Finally, a word on process. Every number in this report comes from the attached inputs, the "
    "valuation tables or the agents' transcript, and the value was recomputed after every change that "
    "an agent proposed. The refinement rounds stopped once the estimate stopped moving, which is the "
    "signal that the remaining disagreement with the market is a matter of judgement rather than of "
    "missing information. We will revisit the valuation when the company next reports results, when "
    "trade policy changes, or when the price moves far enough from our estimate to warrant a fresh look "
    "at the story and at the numbers behind it. Until then, the recommendation stands.",
]


def draft():
    headings = ["The story", "Profitability", "Reinvestment", "Risk", "What the agents found",
                "Recent news", "Recommendation", "What this is not", "Process"]
    sections = []
    for h, body in zip(headings, STORY):
        s = {"heading": h, "body": body, "table_refs": [], "chart_refs": []}
        sections.append(s)
    sections[0]["chart_refs"] = ["projection"]
    sections[3]["table_refs"] = ["sensitivity"]
    sections[6]["chart_refs"] = ["sensitivity"]
    return {
        "title": "A maturing leader priced for a price war",
        "sections": sections,
        "sources": ["Company filings summarized in the fundamentals snapshot"],
    }


def rules():
    def r(template, response, **kw):
        out = {"template": template}
        out.update(kw)
        out["response"] = response
        return out

    market = {
        "changes": [
            {"path": "revenue_growth[1]", "value": 0.10},
            {"path": "revenue_growth[2..9]", "value": 0.07},
            {"path": "operating_margin[1]", "value": 0.05},
            {"path": "operating_margin[2..10]", "value": 0.067},
            {"path": "terminal_margin", "value": 0.07},
            {"path": "sales_to_capital[1..5]", "value": 1.2},
            {"path": "sales_to_capital[6..10]", "value": 1.6},
        ],
        "rationale": "The price implies slower growth and thinner margins than the company's cost position "
                     "supports; growth eases from 10% to 7%, margins recover to 6.7% and 7% in steady state, "
                     "and reinvestment efficiency improves once new plants are running.",
    }
    headline_scores = {
        "BYD monthly deliveries climb on plug-in hybrid demand": 0.9,
        "BYD to build assembly plant in Turkey": 0.7,
        "EU duties on Chinese electric cars take effect": 0.6,
        "BYD sponsors European football tournament broadcast": 0.2,
        "Analysts debate how long the Chinese EV price war will last": 0.4,
        "BYD quarterly revenue overtakes Tesla": 0.95,
    }
    lede_scores = {
        "BYD monthly deliveries climb on plug-in hybrid demand": 0.8,
        "BYD to build assembly plant in Turkey": 0.5,
        "EU duties on Chinese electric cars take effect": 0.7,
        "Analysts debate how long the Chinese EV price war will last": 0.2,
        "BYD quarterly revenue overtakes Tesla": 0.9,
    }
    out = [
        r("market", market, call=1),
        r("market", {"changes": [], "rationale": "No further change; the remaining gap is sentiment."}),
        r("sensitivity_axes", {"rows": "terminal_margin", "cols": "cost_of_capital"}),
        r("sensitivity", {"changes": [], "rationale": "Every scenario in the grid is plausible."}),
        r("consensus", {"changes": [], "rationale": "Consensus leans on one strong year; keep 10% growth."}),
        r("comparables", {"changes": [], "rationale": "A lower multiple than peers fits a larger, slower-growing company."}),
    ]
    for h, s in headline_scores.items():
        out.append(r("news_headline", {"relevance": s}, contains=f"Headline: {h}\n"))
    out.append(r("news_headline", {"relevance": 0.1}))
    for h, s in lede_scores.items():
        out.append(r("news_lede", {"relevance": s}, contains=f"Headline: {h}\n"))
    out.append(r("news_lede", {"relevance": 0.1}))
    out += [
        r("news_digest", {
            "summary": "Deliveries keep rising on hybrid demand; a Turkish plant would sidestep EU duties, "
                       "which spare hybrids.",
            "implications": [{"path": "operating_margin[1]", "direction": "up",
                              "rationale": "Hybrid mix and local production protect near-term margin."}],
        }),
        r("news_apply", {"changes": [{"path": "operating_margin[1]", "value": 0.052}],
                         "rationale": "Hybrid mix lifts the first-year margin slightly."}),
        r("router", {"route": "sensitivity", "instruction": "Recheck the scenario range after the news."}, call=1),
        r("router", {"route": "consensus", "instruction": "Confirm the first-year growth against analysts."}, call=2),
        r("router", {"route": "end", "instruction": "The estimate is stable."}),
        r("report_writer", draft()),
        r("report_reviser", draft()),
        r("critic", {"issues": []}),
    ]
    return {"rules": out}


def main():
    write_byd()
    write_batch()
    dump(SCRIPTS / "byd.rules.json", rules())


if __name__ == "__main__":
    main()
