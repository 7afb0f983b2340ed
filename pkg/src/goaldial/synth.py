"""Synthetic corpus generator.

Builds a small knowledge graph over 7 domains, samples seeker profiles,
instantiates dialogs from 20 built-in goal-sequence skeletons (3 to 5 goals,
final goal always a recommendation), and realizes utterances from
slot-filling templates that embed knowledge triples verbatim. Template
realization is deliberately paraphrase-free so each bot turn's gold
knowledge is known exactly.

Two properties the rest of the system leans on:
  - topic transitions stay within 2 graph hops, so goal-sequence validation
    passes and next-topic candidates are recoverable from the graph;
  - a recommender turn that switches topic names the new topic before any
    context mentions it, so the goal input carries signal the context alone
    does not.
Generation is deterministic: one random.Random(seed) drives every choice.
"""

import random
from dataclasses import dataclass

from .corpus import DialogRecord
from .domain import (DialogType, Goal, GoalSequence, SeekerProfile, Speaker,
                     Utterance, update_profile, validate_goal_sequence)
from .errors import ConfigError
from .knowledge import KnowledgeGraph, KnowledgeTriple

DOMAINS = ("明星", "电影", "音乐", "美食", "餐厅", "新闻", "天气")

_CITIES = ("北京", "上海", "广州", "成都", "杭州", "武汉", "西安", "重庆")
_SURNAMES = "赵钱孙李周吴郑王冯陈褚卫蒋沈韩杨朱秦尤许"
_GIVEN = ("一歌", "若曦", "子墨", "晓峰", "雨桐", "天翊", "梦洁", "浩然",
          "静怡", "子轩", "诗涵", "俊杰", "可欣", "志强", "语嫣", "文博",
          "思远", "嘉怡", "宇航", "芷若")
_MOVIE_BASES = ("迷雾之城", "星河彼岸", "旧梦重温", "追风少年", "夜色温柔",
                "孤岛来信", "时光列车", "海上花开", "无声告白", "山川故人",
                "白夜行者", "远方鼓声", "第七封信", "雪落无声", "春风十里",
                "暗流涌动", "灯塔守望", "纸上人间", "琥珀之心", "逆光飞行")
_SONG_BASES = ("晚风", "萤火", "路口", "白鸽", "夏夜", "心跳", "流星",
               "小城", "远行", "告白", "潮汐", "风筝", "灯火", "群岛",
               "暮色", "信笺", "山丘", "断桥", "晨雾", "星尘")
_ALBUMS = ("四季", "屿", "无垠", "拾光", "漫游记", "回声", "平行线", "夜航")
_FOODS = ("烤鸭", "火锅", "小笼包", "麻辣烫", "煎饼果子", "肠粉", "热干面",
          "酸菜鱼", "羊肉泡馍", "糖醋排骨", "臭豆腐", "串串香", "生煎包",
          "冒菜", "驴打滚", "桂林米粉")
_REST_BASES = ("福来居", "醉仙楼", "四季食府", "老街小馆", "聚香园",
               "满庭芳", "江南灶", "蜀味轩", "百味斋", "闻香阁",
               "云水谣", "巷子深", "丰年馆", "禾田里", "九号院", "拾味堂")
_GENRES = ("爱情", "喜剧", "动作", "悬疑", "科幻", "文艺")
_ZODIAC = ("白羊座", "金牛座", "双子座", "巨蟹座", "狮子座", "处女座",
           "天秤座", "天蝎座", "射手座", "摩羯座", "水瓶座", "双鱼座")
_TASTES = ("麻辣", "清淡", "鲜香", "酸甜", "咸鲜")
_SKY = ("晴", "多云", "小雨", "阴", "雷阵雨", "小雪")
_AIR = ("优", "良", "轻度污染")
_AGE_RANGES = ("18-25", "26-35", "36-45", "46-55", "大于56")
_OCCUPATIONS = ("student", "worker", "retirement")


@dataclass(frozen=True)
class SynthConfig:
    n_seekers: int = 50
    dialogs_per_seeker: int = 4
    graph_size: int = 150
    seed: int = 7

    def __post_init__(self):
        if self.n_seekers < 3:
            raise ConfigError(f"n_seekers must be >= 3, got {self.n_seekers}")
        if self.dialogs_per_seeker < 1:
            raise ConfigError("dialogs_per_seeker must be >= 1")
        if self.graph_size < 60:
            raise ConfigError(f"graph_size must be >= 60, got {self.graph_size}")


class _World:
    """Generated entities plus the lookup tables the realizer needs."""

    def __init__(self):
        self.triples: list[tuple[str, str, str]] = []
        self.tags: dict[str, str] = {}
        self.stars: list[str] = []
        self.movies: dict[str, list[str]] = {}
        self.songs: dict[str, list[str]] = {}
        self.news: dict[str, list[str]] = {}
        self.song_album: dict[str, str] = {}
        self.foods_by_city: dict[str, list[str]] = {}
        self.rest_by_food: dict[str, str] = {}
        self.rest_by_city: dict[str, list[str]] = {}
        self.weather_of: dict[str, str] = {}

    def add(self, s: str, p: str, o: str) -> None:
        self.triples.append((s, p, o))


def _build_world(rng: random.Random, graph_size: int) -> _World:
    w = _World()
    n_stars = max(4, (graph_size - 40) // 11)
    names = [a + b for a in _SURNAMES for b in _GIVEN]
    rng.shuffle(names)
    star_names = names[:n_stars]

    def title(pool, i, wrap="《{}》"):
        base = pool[i % len(pool)]
        if i >= len(pool):
            base = f"{base}{i // len(pool) + 1}"
        return wrap.format(base)

    for city in _CITIES:
        w.tags[city] = "天气"
        wx = f"{city}天气"
        w.tags[wx] = "天气"
        w.weather_of[city] = wx
        w.add(wx, "城市", city)
        w.add(wx, "天气状况", rng.choice(_SKY))
        w.add(wx, "气温", f"{rng.randrange(-4, 18)}到{rng.randrange(19, 33)}摄氏度")
        w.add(wx, "空气质量", rng.choice(_AIR))

    mi = si = ni = 0
    for k, star in enumerate(star_names):
        w.stars.append(star)
        w.tags[star] = "明星"
        city = _CITIES[k % len(_CITIES)]
        w.add(star, "生日", f"{1968 + rng.randrange(0, 30)}年{rng.randrange(1, 13)}月{rng.randrange(1, 29)}日")
        w.add(star, "星座", rng.choice(_ZODIAC))
        w.add(star, "血型", rng.choice(("A", "B", "O", "AB")))
        w.add(star, "出生地", city)
        w.movies[star] = []
        w.songs[star] = []
        w.news[star] = []
        for _ in range(4):
            m = title(_MOVIE_BASES, mi)
            mi += 1
            w.movies[star].append(m)
            w.tags[m] = "电影"
            w.add(star, "代表作", m)
            w.add(m, "主演", star)
            w.add(m, "评分", f"{rng.randrange(70, 96) / 10:.1f}")
            w.add(m, "类型", rng.choice(_GENRES))
            w.add(m, "上映时间", f"{2005 + rng.randrange(0, 18)}年")
        for _ in range(4):
            g = title(_SONG_BASES, si)
            si += 1
            w.songs[star].append(g)
            w.tags[g] = "音乐"
            album = f"《{rng.choice(_ALBUMS)}》"
            w.song_album[g] = album
            w.add(star, "成名曲", g)
            w.add(g, "演唱者", star)
            w.add(g, "专辑", album)
            w.add(g, "发行时间", f"{2008 + rng.randrange(0, 15)}年")
        for j in range(2):
            n = f"{star}{('新专辑发布', '获奖消息')[j]}"
            ni += 1
            w.news[star].append(n)
            w.tags[n] = "新闻"
            w.add(n, "主角", star)
            w.add(n, "日期", f"2023年{rng.randrange(1, 13)}月{rng.randrange(1, 29)}日")
            w.add(n, "内容", f"{star}近期动态引发关注")

    for i, food in enumerate(_FOODS):
        city = _CITIES[i % len(_CITIES)]
        w.tags[food] = "美食"
        w.foods_by_city.setdefault(city, []).append(food)
        w.add(food, "口味", rng.choice(_TASTES))
        w.add(food, "人均价格", f"{15 + 5 * rng.randrange(0, 12)}元")
        w.add(food, "流行城市", city)
        rest = f"{city}{_REST_BASES[i % len(_REST_BASES)]}"
        w.tags[rest] = "餐厅"
        w.rest_by_food[food] = rest
        w.rest_by_city.setdefault(city, []).append(rest)
        w.add(rest, "招牌菜", food)
        w.add(rest, "所在城市", city)
        w.add(rest, "评分", f"{rng.randrange(38, 50) / 10:.1f}")
    return w


# Skeletons: (name, [(dialog_type, slot), ...]); slots are resolved against
# the seeker's star / city and the per-seeker pool of unused rec targets.
# Final slot is always the recommendation target.
_SKELETONS = [
    ("star-movie-3", [("chitchat", "star"), ("qa", "star"), ("rec", "movie_new")]),
    ("star-movie-4", [("chitchat", "star"), ("qa", "star"), ("chitchat", "movie_known"), ("rec", "movie_new")]),
    ("star-song-3", [("qa", "star"), ("chitchat", "star"), ("rec", "song_new")]),
    ("news-movie-3", [("chitchat", "news"), ("qa", "star"), ("rec", "movie_new")]),
    ("star-play-song", [("chitchat", "star"), ("task", "song_known"), ("rec", "song_new")]),
    ("weather-food-3", [("qa", "weather"), ("chitchat", "weather"), ("rec", "food_new")]),
    ("weather-rest-3", [("qa", "weather"), ("chitchat", "weather"), ("rec", "rest_city_new")]),
    ("food-rest-3", [("chitchat", "food_known"), ("qa", "food_known"), ("rec", "rest_of_food")]),
    ("food-rest-qa", [("qa", "food_known"), ("chitchat", "food_known"), ("rec", "rest_of_food")]),
    ("star-moviechat", [("chitchat", "star"), ("qa", "movie_known"), ("rec", "movie_new")]),
    ("star-songchat", [("chitchat", "star"), ("qa", "song_known"), ("rec", "song_new")]),
    ("news-star-song", [("chitchat", "news"), ("chitchat", "star"), ("rec", "song_new")]),
    ("qa-play-song", [("qa", "star"), ("task", "song_known"), ("rec", "song_new")]),
    ("star-play-4", [("chitchat", "star"), ("qa", "star"), ("task", "song_known"), ("rec", "song_new")]),
    ("news-movie-4", [("chitchat", "news"), ("qa", "star"), ("chitchat", "movie_known"), ("rec", "movie_new")]),
    ("weather-food-rest", [("qa", "weather"), ("chitchat", "weather"), ("qa", "food_known_city"), ("rec", "rest_of_food")]),
    ("star-movie-5", [("chitchat", "star"), ("qa", "star"), ("chitchat", "movie_known"), ("qa", "movie_known"), ("rec", "movie_new")]),
    ("news-play-4", [("chitchat", "news"), ("qa", "star"), ("task", "song_known"), ("rec", "song_new")]),
    ("weather-food-5", [("qa", "weather"), ("chitchat", "weather"), ("qa", "food_known_city"), ("chitchat", "food_known_city"), ("rec", "food_new")]),
    ("star-mixed-4", [("chitchat", "star"), ("qa", "movie_known"), ("task", "song_known"), ("rec", "song_new")]),
]


def _sample_profile(rng: random.Random, idx: int, w: _World) -> SeekerProfile:
    name = f"{rng.choice(_SURNAMES)}{rng.choice(_GIVEN)}"
    star = rng.choice(w.stars)
    city = rng.choice(sorted(w.foods_by_city))
    liked = rng.sample(DOMAINS, rng.choice((1, 2)))
    disliked = [d for d in DOMAINS if d not in liked][rng.randrange(len(DOMAINS) - len(liked))]
    food = w.foods_by_city[city][0]
    return SeekerProfile(
        seeker_id=f"seeker_{idx:04d}",
        name=name,
        gender=rng.choice(("male", "female")),
        age_range=rng.choice(_AGE_RANGES),
        city=city,
        occupation=rng.choice(_OCCUPATIONS),
        preferred_domains=tuple(liked),
        disliked_domains=(disliked,),
        seed_entities=(star, food),
    )


class _SlotError(Exception):
    """Raised when a skeleton cannot be grounded for this seeker; the caller
    retries with a different skeleton."""


_REC_SLOT_DOMAIN = {"movie_new": "电影", "song_new": "音乐", "food_new": "美食",
                    "rest_city_new": "餐厅", "rest_of_food": "餐厅"}


class _Realizer:
    def __init__(self, w: _World, graph: KnowledgeGraph, rng: random.Random):
        self.w = w
        self.graph = graph
        self.rng = rng

    def _literals(self, topic: str) -> list[KnowledgeTriple]:
        ts = self.graph.triples_about(topic)
        if not ts:
            raise _SlotError(f"no triples about {topic}")
        lits = [t for t in ts if not self.graph.has_entity(t.object)]
        return lits or ts

    def fact(self, topic: str) -> KnowledgeTriple:
        return self._literals(topic)[0]

    def qa_fact(self, topic: str) -> KnowledgeTriple:
        return self.rng.choice(self._literals(topic))


def _resolve_slots(skel, profile: SeekerProfile, w: _World, used: set[str],
                   rng: random.Random) -> list[str]:
    """Maps each skeleton slot to a concrete topic, honoring the seeker's
    star and city and never recommending a used or rejected entity."""
    star = profile.seed_entities[0]
    city = profile.city

    def fresh(pool):
        for e in pool:
            if e not in used:
                return e
        raise _SlotError("pool exhausted")

    topics = []
    for _, slot in skel:
        if slot == "star":
            topics.append(star)
        elif slot == "news":
            topics.append(w.news[star][rng.randrange(len(w.news[star]))])
        elif slot == "weather":
            topics.append(w.weather_of[city])
        elif slot == "movie_known":
            topics.append(w.movies[star][0])
        elif slot == "song_known":
            topics.append(w.songs[star][0])
        elif slot == "food_known":
            topics.append(profile.seed_entities[1])
        elif slot == "food_known_city":
            topics.append(w.foods_by_city[city][0])
        elif slot == "movie_new":
            topics.append(fresh(w.movies[star][1:]))
        elif slot == "song_new":
            topics.append(fresh(w.songs[star][1:]))
        elif slot == "food_new":
            topics.append(fresh(w.foods_by_city[city]))
        elif slot == "rest_city_new":
            topics.append(fresh(w.rest_by_city[city]))
        elif slot == "rest_of_food":
            prev = topics[-1] if topics else w.foods_by_city[city][0]
            food = prev if prev in w.rest_by_food else w.foods_by_city[city][0]
            rest = w.rest_by_food[food]
            if rest in used:
                raise _SlotError("restaurant already used")
            topics.append(rest)
        else:
            raise ValueError(f"unknown slot {slot!r}")
    return topics


def _alternative_for(topic: str, w: _World, used: set[str]) -> str | None:
    pools: list[list[str]] = []
    for star, ms in sorted(w.movies.items()):
        if topic in ms:
            pools.append([m for m in ms if m != topic])
    for star, gs in sorted(w.songs.items()):
        if topic in gs:
            pools.append([g for g in gs if g != topic])
    for city, fs in sorted(w.foods_by_city.items()):
        if topic in fs:
            pools.append([f for f in fs if f != topic])
    for city, rs in sorted(w.rest_by_city.items()):
        if topic in rs:
            pools.append([r for r in rs if r != topic])
    for pool in pools:
        for e in pool:
            if e not in used:
                return e
    return None


def _realize_dialog(skel, topics, profile, w: _World, graph, rng,
                    used: set[str]):
    """Returns (goals, turns, turn_gold, outcomes). Turns alternate speakers
    starting from the seeker; recommender turns that open a changed topic
    name it before any context does."""
    r = _Realizer(w, graph, rng)
    goals = []
    for (gtype, slot), topic in zip(skel, topics):
        goals.append(Goal(DialogType(
            {"qa": "qa", "chitchat": "chitchat", "rec": "recommendation",
             "task": "task"}[gtype]), topic, slot))
    turns: list[tuple[Speaker, str, int, tuple]] = []
    outcomes: list[tuple[str, str]] = []

    def emit(speaker, text, gi, gold=()):
        turns.append((speaker, text, gi, tuple(gold)))

    prev_topic = None
    for gi, ((gtype, slot), topic) in enumerate(zip(skel, topics)):
        # bot replies avoid repeating entity names the context already
        # holds: within a template family only the goal topic or the fact
        # object separates the true reply from a lookalike
        if gtype == "qa":
            t = r.qa_fact(topic)
            emit(Speaker.SEEKER, f"你知道{topic}的{t.predicate}是什么吗?", gi)
            emit(Speaker.RECOMMENDER, f"这个嘛,是{t.object}哦。", gi, [t])
        elif gtype == "chitchat":
            t = r.fact(topic)
            if prev_topic is not None and topic != prev_topic:
                emit(Speaker.RECOMMENDER,
                     f"说到这个,我想起{topic}了,{t.predicate}是{t.object}。",
                     gi, [t])
                emit(Speaker.SEEKER, "原来是这样,又学到了。", gi)
            else:
                emit(Speaker.SEEKER, f"我最近对{topic}很感兴趣,你觉得怎么样?", gi)
                emit(Speaker.RECOMMENDER,
                     f"是啊,{t.predicate}是{t.object},确实不错。",
                     gi, [t])
        elif gtype == "task":
            star = profile.seed_entities[0]
            album = w.song_album[topic]
            t = KnowledgeTriple(topic, "专辑", album)
            emit(Speaker.SEEKER, f"帮我放一首{star}的歌吧。", gi)
            emit(Speaker.RECOMMENDER,
                 f"好的,为你播放{topic},收录在专辑{album}里。", gi, [t])
        elif gtype == "rec":
            t = r.fact(topic)
            emit(Speaker.RECOMMENDER,
                 f"我觉得你会喜欢{topic},{t.predicate}是{t.object},推荐给你。",
                 gi, [t])
            op = rng.choice(("accept", "reject_initial", "ask_question", "new_topic"))
            if op == "accept":
                emit(Speaker.SEEKER, "好的,听起来很棒,我很喜欢。", gi)
                outcomes.append((topic, "accepted"))
            elif op == "ask_question":
                t2 = r.qa_fact(topic)
                emit(Speaker.SEEKER, f"{topic}的{t2.predicate}怎么样?", gi)
                emit(Speaker.RECOMMENDER,
                     f"这个嘛,是{t2.object}哦。", gi, [t2])
                emit(Speaker.SEEKER, "听起来不错,我就选这个了。", gi)
                outcomes.append((topic, "accepted"))
            else:
                alt = _alternative_for(topic, w, used | {topic})
                if alt is None:
                    raise _SlotError("no alternative recommendation target")
                t2 = r.fact(alt)
                if op == "reject_initial":
                    emit(Speaker.SEEKER, f"我对{topic}不太感兴趣,有别的吗?", gi)
                    outcomes.append((topic, "rejected"))
                else:
                    emit(Speaker.SEEKER, "这个一般,我想换一个试试。", gi)
                emit(Speaker.RECOMMENDER,
                     f"那你可以试试{alt},{t2.predicate}是{t2.object}。",
                     gi, [t2])
                emit(Speaker.SEEKER, f"不错,就{alt}吧。", gi)
                outcomes.append((alt, "accepted"))
        prev_topic = topic

    fixed: list[tuple[Speaker, str, int, tuple]] = []
    for speaker, text, gi, gold in turns:
        if fixed and fixed[-1][0] is speaker:
            if speaker is Speaker.RECOMMENDER:
                fixed.append((Speaker.SEEKER, "嗯嗯,你接着说。", fixed[-1][2], ()))
            else:
                fixed.append((Speaker.RECOMMENDER, "好的,你随意聊。", fixed[-1][2], ()))
        fixed.append((speaker, text, gi, gold))
    return goals, fixed, outcomes


def _dialog_knowledge(goals, turn_gold, graph) -> tuple[KnowledgeTriple, ...]:
    """Per-dialog pool: everything about each goal topic plus every gold
    triple, deduped in graph order."""
    want = set()
    for g in goals:
        for t in graph.triples_about(g.topic):
            want.add(t)
    for gold in turn_gold:
        want |= set(gold)
    return tuple(t for t in graph.triples if t in want)


def generate_synthetic_corpus(config: SynthConfig
                              ) -> tuple[KnowledgeGraph, list[DialogRecord]]:
    rng = random.Random(config.seed)
    w = _build_world(rng, config.graph_size)
    graph = KnowledgeGraph.from_triples(w.triples, w.tags)
    records: list[DialogRecord] = []
    for si in range(config.n_seekers):
        profile = _sample_profile(rng, si, w)
        used: set[str] = set()
        for di in range(config.dialogs_per_seeker):
            goals = turns = outcomes = None
            for _ in range(40):
                _, skel = _SKELETONS[rng.randrange(len(_SKELETONS))]
                state = rng.getstate()
                if _REC_SLOT_DOMAIN[skel[-1][1]] in profile.disliked_domains:
                    continue
                try:
                    topics = _resolve_slots(skel, profile, w, used, rng)
                    goals, turns, outcomes = _realize_dialog(
                        skel, topics, profile, w, graph, rng, used)
                    break
                except _SlotError:
                    rng.setstate(state)
                    continue
            if goals is None:
                raise ConfigError(
                    f"could not ground any skeleton for seeker {si} dialog {di}; "
                    "increase graph_size or lower dialogs_per_seeker")
            utts = tuple(Utterance(s, txt, gi) for s, txt, gi, _ in turns)
            turn_gold = tuple(gold for _, _, _, gold in turns)
            know = _dialog_knowledge(goals, turn_gold, graph)
            profile_after = update_profile(profile, outcomes)
            rec = DialogRecord(
                seeker_id=profile.seeker_id, dialog_index=di,
                profile=profile, profile_after=profile_after,
                goals=tuple(goals), knowledge=know, turns=utts,
                turn_gold=turn_gold)
            report = validate_goal_sequence(
                GoalSequence(tuple(goals)), graph, profile)
            if not report.ok:
                raise ConfigError(
                    f"generated dialog failed validation: {report.violations}")
            records.append(rec)
            for e, verdict in outcomes:
                used.add(e)
            profile = profile_after
    return graph, records
