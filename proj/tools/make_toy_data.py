#!/usr/bin/env python3
"""Regenerates the toy datasets in data/:

  mgsm_toy_full.jsonl  ten arithmetic word problems per language (110 records)
  mgsm_toy.jsonl       a 10-record subset, two records from each of five
                       languages, small enough for quick end-to-end runs

Every record has a worked chain so any record can serve as an exemplar."""

import json
import random
import sys

TEMPLATES = {
    "en": ("Tom", [
        "{n} has {a} apples and buys {b} more. How many apples does {n} have now?",
        "{n} had {a} eggs and used {b}. How many eggs are left?",
        "A box holds {a} pens. How many pens are in {b} boxes?"]),
    "de": ("Lena", [
        "{n} hat {a} Äpfel und kauft {b} weitere. Wie viele Äpfel hat {n} jetzt?",
        "{n} hatte {a} Eier und hat {b} verbraucht. Wie viele Eier sind übrig?",
        "Eine Schachtel enthält {a} Stifte. Wie viele Stifte sind in {b} Schachteln?"]),
    "fr": ("Marie", [
        "{n} a {a} pommes et en achète {b} de plus. Combien de pommes {n} a-t-elle maintenant ?",
        "{n} avait {a} œufs et en a utilisé {b}. Combien d'œufs reste-t-il ?",
        "Une boîte contient {a} stylos. Combien de stylos y a-t-il dans {b} boîtes ?"]),
    "es": ("Lucía", [
        "{n} tiene {a} manzanas y compra {b} más. ¿Cuántas manzanas tiene {n} ahora?",
        "{n} tenía {a} huevos y usó {b}. ¿Cuántos huevos quedan?",
        "Una caja tiene {a} bolígrafos. ¿Cuántos bolígrafos hay en {b} cajas?"]),
    "ru": ("Саши", [
        "У {n} есть {a} яблок, и он покупает ещё {b}. Сколько яблок у {n} теперь?",
        "У {n} было {a} яиц, и он использовал {b}. Сколько яиц осталось?",
        "В коробке {a} ручек. Сколько ручек в {b} коробках?"]),
    "zh": ("小明", [
        "{n}有{a}个苹果，又买了{b}个。{n}现在有多少个苹果？",
        "{n}有{a}个鸡蛋，用了{b}个。还剩多少个鸡蛋？",
        "一个盒子里有{a}支笔。{b}个盒子里有多少支笔？"]),
    "ja": ("花子", [
        "{n}はりんごを{a}個持っていて、さらに{b}個買いました。{n}は今りんごを何個持っていますか？",
        "{n}は卵を{a}個持っていて、{b}個使いました。卵は何個残っていますか？",
        "1つの箱にペンが{a}本入っています。{b}箱では何本ですか？"]),
    "th": ("สมชาย", [
        "{n}มีแอปเปิล {a} ผล และซื้อเพิ่มอีก {b} ผล ตอนนี้{n}มีแอปเปิลกี่ผล",
        "{n}มีไข่ {a} ฟอง และใช้ไป {b} ฟอง เหลือไข่กี่ฟอง",
        "กล่องหนึ่งมีปากกา {a} ด้าม {b} กล่องมีปากกากี่ด้าม"]),
    "te": ("రాము", [
        "{n} దగ్గర {a} ఆపిల్స్ ఉన్నాయి, ఇంకా {b} కొన్నాడు. ఇప్పుడు {n} దగ్గర ఎన్ని ఆపిల్స్ ఉన్నాయి?",
        "{n} దగ్గర {a} గుడ్లు ఉండేవి, {b} వాడాడు. ఎన్ని గుడ్లు మిగిలాయి?",
        "ఒక పెట్టెలో {a} పెన్నులు ఉన్నాయి. {b} పెట్టెలలో ఎన్ని పెన్నులు ఉన్నాయి?"]),
    "bn": ("রাম", [
        "{n}-এর কাছে {a}টি আপেল আছে এবং সে আরও {b}টি কিনল। এখন {n}-এর কাছে কয়টি আপেল আছে?",
        "{n}-এর কাছে {a}টি ডিম ছিল এবং সে {b}টি ব্যবহার করল। কয়টি ডিম বাকি আছে?",
        "একটি বাক্সে {a}টি কলম আছে। {b}টি বাক্সে কয়টি কলম আছে?"]),
    "sw": ("Juma", [
        "{n} ana tufaha {a} na ananunua {b} zaidi. {n} ana tufaha ngapi sasa?",
        "{n} alikuwa na mayai {a} na akatumia {b}. Mayai mangapi yamebaki?",
        "Sanduku moja lina kalamu {a}. Kuna kalamu ngapi katika masanduku {b}?"]),
}


SMALL_LANGS = ["en", "zh", "th", "te", "sw"]


def main(out_dir):
    rng = random.Random(2024)
    lines = []
    for lang, (name, templates) in TEMPLATES.items():
        for i in range(10):
            kind = i % 3
            if kind == 0:
                a, b = rng.randint(2, 40), rng.randint(2, 40)
                c, op = a + b, "+"
            elif kind == 1:
                a = rng.randint(10, 60)
                b = rng.randint(1, a - 1)
                c, op = a - b, "-"
            else:
                a, b = rng.randint(2, 12), rng.randint(2, 9)
                c, op = a * b, "*"
            rec = {
                "id": f"{lang}-{i:02d}",
                "lang": lang,
                "question": templates[kind].format(n=name, a=a, b=b),
                "answer": str(c),
                "chain": f"{a} {op} {b} = {c}.",
            }
            lines.append((rec, json.dumps(rec, ensure_ascii=False)))
    small = [line for rec, line in lines if rec["lang"] in SMALL_LANGS and rec["id"][-2:] in ("00", "01")]
    write(f"{out_dir}/mgsm_toy_full.jsonl", [line for _, line in lines])
    write(f"{out_dir}/mgsm_toy.jsonl", small)


def write(path, lines):
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data")
