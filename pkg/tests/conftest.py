"""Shared fixtures: a simulated shop site and its scripted browse tasks."""

import pytest

from autokernel.web import SimWeb

SHOP_FIXTURE = {
    "schema": "simweb/v1",
    "start_url": "sim://shop",
    "viewport": {"w": 1280, "h": 720},
    "pages": {
        "sim://shop": {
            "title": "Acme Shop",
            "elements": [
                {"id": "h1", "role": "heading", "name": "Acme Shop",
                 "bbox": [0, 0, 400, 40]},
                {"id": "sb", "role": "textbox", "name": "search",
                 "bbox": [0, 60, 300, 30], "states": ["editable"]},
                {"id": "go", "role": "button", "name": "Search",
                 "bbox": [320, 60, 90, 30],
                 "on_click": {"goto_query": {
                     "template": "sim://shop/search?q={value}", "field": "sb"}}},
                {"id": "nav", "role": "link", "name": "Products",
                 "bbox": [0, 110, 120, 24], "on_click": {"goto": "sim://shop/products"}},
                {"id": "menu", "role": "button", "name": "Menu",
                 "bbox": [200, 110, 90, 24], "on_click": {"toggle": "nav"}},
                {"id": "mi-deals", "role": "menuitem", "name": "Deals",
                 "bbox": [200, 140, 120, 24], "visible_when": "nav", "z": 10,
                 "on_click": {"goto": "sim://shop/deals"}},
                {"id": "mi-contact", "role": "menuitem", "name": "Contact",
                 "bbox": [200, 170, 120, 24], "visible_when": "nav", "z": 10,
                 "on_click": {"goto": "sim://shop/contact"}},
                {"id": "buy", "role": "button", "name": "Buy now",
                 "bbox": [100, 300, 200, 40], "z": 0,
                 "on_click": {"goto": "sim://shop/checkout"}},
                {"id": "banner", "role": "link", "name": "Sale banner",
                 "bbox": [80, 280, 260, 80], "z": 5,
                 "on_click": {"goto": "sim://shop/sale"}},
            ],
        },
        "sim://shop/products": {
            "title": "Products",
            "content_height": 2160,
            "elements": [
                {"id": "ph", "role": "heading", "name": "Products",
                 "bbox": [0, 0, 300, 40]},
                {"id": "p-widget", "role": "link", "name": "Widget",
                 "bbox": [0, 80, 200, 24], "on_click": {"goto": "sim://shop/widget"}},
                {"id": "p-gadget", "role": "link", "name": "Gadget",
                 "bbox": [0, 120, 200, 24], "on_click": {"goto": "sim://shop/gadget"}},
                {"id": "p-rare", "role": "link", "name": "Rare item",
                 "bbox": [0, 1600, 200, 24], "on_click": {"goto": "sim://shop/rare"}},
            ],
        },
        "sim://shop/widget": {
            "title": "Widget",
            "elements": [
                {"id": "wh", "role": "heading", "name": "Widget",
                 "bbox": [0, 0, 300, 40]},
                {"id": "wp", "role": "text", "name": "Price: $19",
                 "bbox": [0, 60, 200, 24]},
                {"id": "wa", "role": "button", "name": "Add to cart",
                 "bbox": [0, 100, 150, 30], "on_click": {"goto": "sim://shop/cart"}},
            ],
        },
        "sim://shop/gadget": {
            "title": "Gadget",
            "elements": [
                {"id": "gh", "role": "heading", "name": "Gadget",
                 "bbox": [0, 0, 300, 40]},
                {"id": "gp", "role": "text", "name": "Price: $42",
                 "bbox": [0, 60, 200, 24]},
            ],
        },
        "sim://shop/search?q=milk": {
            "title": "Search results",
            "elements": [
                {"id": "sr", "role": "text", "name": "Results for milk",
                 "bbox": [0, 0, 300, 24]},
            ],
        },
        "sim://shop/dup": {
            "title": "Duplicates",
            "elements": [
                {"id": "m1", "role": "button", "name": "More",
                 "bbox": [0, 0, 100, 24]},
                {"id": "m2", "role": "button", "name": "More",
                 "bbox": [0, 40, 100, 24]},
            ],
        },
        "sim://shop/deals": {"title": "Deals", "elements": [
            {"id": "dh", "role": "heading", "name": "Deals", "bbox": [0, 0, 300, 40]}]},
        "sim://shop/contact": {"title": "Contact", "elements": [
            {"id": "ch", "role": "heading", "name": "Contact", "bbox": [0, 0, 300, 40]}]},
        "sim://shop/sale": {"title": "Sale", "elements": [
            {"id": "slh", "role": "heading", "name": "Sale", "bbox": [0, 0, 300, 40]}]},
        "sim://shop/checkout": {"title": "Checkout", "elements": [
            {"id": "coh", "role": "heading", "name": "Checkout", "bbox": [0, 0, 300, 40]}]},
        "sim://shop/cart": {"title": "Cart", "elements": [
            {"id": "cah", "role": "heading", "name": "Cart", "bbox": [0, 0, 300, 40]}]},
        "sim://shop/rare": {"title": "Rare item", "elements": [
            {"id": "rh", "role": "heading", "name": "Rare item", "bbox": [0, 0, 300, 40]}]},
    },
}


def _stop(text):
    return f'Action: Stop("{text}")'


# (name, instruction, scripted policy entries, goal predicate on the session)
BROWSE_TASKS = [
    (
        "open_products",
        "Open the products page",
        ['Action: Click(role="link", name="Products")', _stop("products open")],
        lambda s: s.url == "sim://shop/products",
    ),
    (
        "widget_price",
        "Find the price of the Widget",
        ['Action: Click(role="link", name="Products")',
         'Action: Click(role="link", name="Widget")',
         _stop("the widget costs $19")],
        lambda s: s.url == "sim://shop/widget",
    ),
    (
        "search_milk",
        "Search for milk",
        ['Action: Type(role="textbox", name="search", text="milk")',
         'Action: Click(role="button", name="Search")',
         _stop("searched for milk")],
        lambda s: s.url == "sim://shop/search?q=milk",
    ),
    (
        "menu_deals",
        "Open the deals page from the menu",
        ['Action: Click(role="button", name="Menu")',
         'Action: Click(role="menuitem", name="Deals")',
         _stop("deals open")],
        lambda s: s.url == "sim://shop/deals",
    ),
    (
        "menu_contact",
        "Open the contact page from the menu",
        ['Action: Click(role="button", name="Menu")',
         'Action: Click(role="menuitem", name="Contact")',
         _stop("contact open")],
        lambda s: s.url == "sim://shop/contact",
    ),
    (
        "scroll_to_rare",
        "Open the rare item at the bottom of the products page",
        ['Action: Click(role="link", name="Products")',
         'Action: Scroll(direction="down")',
         'Action: Scroll(direction="down")',
         'Action: Click(role="link", name="Rare item")',
         _stop("rare item open")],
        lambda s: s.url == "sim://shop/rare",
    ),
    (
        "add_to_cart",
        "Add the widget to the cart",
        ['Action: Click(role="link", name="Products")',
         'Action: Click(role="link", name="Widget")',
         'Action: Click(role="button", name="Add to cart")',
         _stop("added")],
        lambda s: s.url == "sim://shop/cart",
    ),
    (
        "gadget_price",
        "Find the price of the Gadget",
        ['Action: Click(role="link", name="Products")',
         'Action: Click(role="link", name="Gadget")',
         _stop("the gadget costs $42")],
        lambda s: s.url == "sim://shop/gadget",
    ),
    (
        "go_back_home",
        "Visit products then come back home",
        ['Action: Click(role="link", name="Products")',
         'Action: Goback()',
         _stop("back home")],
        lambda s: s.url == "sim://shop" and "sim://shop/products" in s.visited,
    ),
    (
        "restart_after_detour",
        "Visit the sale page then restart",
        ['Action: Click(role="link", name="Sale banner")',
         'Action: Restart()',
         _stop("restarted")],
        lambda s: s.url == "sim://shop" and "sim://shop/sale" in s.visited,
    ),
]


@pytest.fixture
def shop_site():
    return SimWeb.from_fixture(SHOP_FIXTURE)
